#include <CLI11.hpp>

#include <iostream>

#include "geopot/cli/commands.hpp"

int main(int argc, char** argv) {
  using namespace geopot::cli;

  CLI::App app{"Geostatistical potential model: fit, simulate, predict, bootstrap, total, covar-dist"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  app.add_option("--config", config_path, "key = value run configuration")->required();
  app.add_option("--seed", seed, "overrides the seed key");
  app.add_option("--out", out, "overrides the out key");
  const std::pair<const char*, const char*> commands[] = {
      {"fit", "EM fit with Wald intervals"},
      {"simulate", "synthetic readings at the data sites"},
      {"predict", "potential, conditional and standard deviation grids"},
      {"bootstrap", "parametric bootstrap intervals and covariance"},
      {"total", "greedy total-potential network"},
      {"covar-dist", "inverse distance covariate raster from a point list"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  const auto command = parse_command(app.get_subcommands().front()->get_name());
  RunConfig config;
  try {
    config = load_config(config_path);
  } catch (const geopot::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  }
  if (seed) config.seed = *seed;
  if (out) config.out = *out;
  return run_and_report(*command, config, std::cerr);
}
