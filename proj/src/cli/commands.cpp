#include "geopot/cli/commands.hpp"

#include <boost/version.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <random>

#include "geopot/cli/csv_io.hpp"
#include "geopot/estimation.hpp"
#include "geopot/inference.hpp"
#include "geopot/model.hpp"
#include "geopot/prediction.hpp"
#include "geopot/random.hpp"

#ifndef GEOPOT_VERSION
#define GEOPOT_VERSION "0.0.0"
#endif

namespace geopot::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Artifacts are staged in memory and written together once the command has
// finished, so a failed computation leaves the output directory untouched.
class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}

  void add(const std::string& name, std::string body) { staged_.emplace_back(name, std::move(body)); }

  std::vector<std::string> names() const {
    std::vector<std::string> n;
    for (const auto& [name, body] : staged_) n.push_back(name);
    return n;
  }

  void commit() {
    std::vector<fs::path> written;
    try {
      fs::create_directories(dir_);
      for (const auto& [name, body] : staged_) {
        const fs::path target = dir_ / name;
        const fs::path tmp = dir_ / (name + ".tmp");
        {
          std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
          if (!f) throw Error(ErrorCode::IoError, "cannot write '" + tmp.string() + "'");
          f << body;
          f.flush();
          if (!f) throw Error(ErrorCode::IoError, "write failed for '" + tmp.string() + "'");
        }
        fs::rename(tmp, target);
        written.push_back(target);
      }
    } catch (...) {
      std::error_code ec;
      for (const auto& p : written) fs::remove(p, ec);
      for (const auto& [name, body] : staged_) fs::remove(dir_ / (name + ".tmp"), ec);
      throw;
    }
  }

 private:
  fs::path dir_;
  std::vector<std::pair<std::string, std::string>> staged_;
};

struct Context {
  const RunConfig& config;
  Command command;
  GeoFrame frame;
  unsigned threads = 1;
  std::vector<std::string> warnings;
  json details = json::object();
};

GeoFrame frame_of(const RunConfig& c) {
  GeoFrame f;
  f.degrees = c.coordinates == "degrees";
  if (f.degrees) {
    f.ref_lon = *c.ref_lon;
    f.ref_lat = *c.ref_lat;
  }
  return f;
}

void require_key(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorCode::ConfigError, message);
}

DataTable load_data(const Context& ctx) {
  require_key(!ctx.config.data.empty(), std::string(to_string(ctx.command)) + " needs `data`");
  return read_data(ctx.config.data, ctx.frame, ctx.config.rescale_covariates);
}

EmOptions em_options(const RunConfig& c, const SiteSet& sites) {
  EmOptions o;
  o.max_iter = c.max_iter;
  o.tol = c.tol;
  if (c.theta_lo || c.theta_hi || c.phi_lo || c.phi_hi) {
    SearchBounds b = SearchBounds::defaults(distance_matrix(sites));
    if (c.theta_lo) b.theta_lo = *c.theta_lo;
    if (c.theta_hi) b.theta_hi = *c.theta_hi;
    if (c.phi_lo) b.phi_lo = *c.phi_lo;
    if (c.phi_hi) b.phi_hi = *c.phi_hi;
    if (!(b.theta_lo < b.theta_hi) || !(b.phi_lo < b.phi_hi))
      throw Error(ErrorCode::ConfigError, "search bounds are empty once combined with the defaults");
    o.bounds = b;
  }
  return o;
}

double final_loglik(const FitResult& f) { return f.loglik_trace.back(); }

// The deterministic start plus `multistart` extra starts with theta and phi
// scaled by seeded factors in [1/4, 4]; the best final likelihood wins.
FitResult fit_model(Context& ctx, const SiteSet& sites) {
  const RunConfig& c = ctx.config;
  const EmOptions opts = em_options(c, sites);
  const ParamVector init = initial_params(sites, c.mu_fixed_zero, c.alpha);
  FitResult best = fit_em(sites, init, opts);
  int started = 1;
  for (int k = 1; k <= c.multistart; ++k) {
    Rng rng = make_stream(c.seed, static_cast<std::uint64_t>(k));
    std::uniform_real_distribution<double> u(-std::log(4.0), std::log(4.0));
    ParamVector start = init;
    start.theta *= std::exp(u(rng));
    start.phi *= std::exp(u(rng));
    try {
      FitResult f = fit_em(sites, start, opts);
      ++started;
      if (final_loglik(f) > final_loglik(best)) best = std::move(f);
    } catch (const Error& e) {
      ctx.warnings.push_back("multistart " + std::to_string(k) + " failed: " + e.what());
    }
  }
  if (!best.converged)
    ctx.warnings.push_back("EM stopped at max_iter = " + std::to_string(c.max_iter) + " without converging");
  ctx.details["fit"] = {{"converged", best.converged},
                        {"iterations", best.iterations},
                        {"loglik", final_loglik(best)},
                        {"optimizer_stalls", best.optimizer_stalls},
                        {"starts", started}};
  return best;
}

// Parameters come from `params` when given, otherwise from a fresh fit.
FitResult obtain_model(Context& ctx, const DataTable& data) {
  const RunConfig& c = ctx.config;
  if (c.params.empty()) return fit_model(ctx, data.sites);
  FitResult f;
  f.params = params_from_rows(read_param_rows(c.params), c.mu_fixed_zero, c.alpha, data.sites.num_covariates());
  f.converged = true;
  f.loglik_trace = {log_likelihood(f.params, data.sites)};
  ctx.details["params_source"] = c.params;
  return f;
}

std::optional<WaldResult> try_wald(Context& ctx, const ParamVector& params, const InfoMatrix& info,
                                   Index num_observed) {
  try {
    WaldResult w = wald_intervals(params, info, ctx.config.level, num_observed);
    if (w.small_sample_caveat)
      ctx.warnings.push_back("fewer than 100 observed sites: Wald intervals are a rough approximation");
    return w;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::SingularInformation) throw;
    ctx.warnings.push_back(std::string("Wald intervals unavailable: ") + e.what());
    return std::nullopt;
  }
}

std::vector<ParamRow> rows_from(const std::vector<Interval>& intervals) {
  std::vector<ParamRow> rows;
  for (const auto& i : intervals) rows.push_back({i.label, i.estimate, i.lower, i.upper});
  return rows;
}

std::vector<ParamRow> rows_without_intervals(const ParamVector& p) {
  std::vector<ParamRow> rows;
  const auto labels = p.free_labels();
  const Vector v = p.free_values();
  for (std::size_t i = 0; i < labels.size(); ++i) rows.push_back({labels[i], v[static_cast<Index>(i)], kNaN, kNaN});
  return rows;
}

std::string format_rescaling(const Rescaling& r) {
  std::string s = "covariate,offset,scale\n";
  for (std::size_t j = 0; j < r.names.size(); ++j)
    s += r.names[j] + "," + format_double(r.offset[static_cast<Index>(j)]) + "," +
         format_double(r.scale[static_cast<Index>(j)]) + "\n";
  return s;
}

FilterRule filter_of(const RunConfig& c) {
  FilterRule f;
  if (c.filter == "none") f.kind = FilterRule::Kind::None;
  else if (c.filter == "phi_above") f.kind = FilterRule::Kind::PhiAbove;
  else f.kind = FilterRule::Kind::PhiAboveMaxDistance;
  f.threshold = c.filter_threshold;
  return f;
}

struct GridInputs {
  GridSpec grid;
  Matrix covariates;
};

std::optional<GridSpec> explicit_grid(const RunConfig& c) {
  const bool any = c.grid_x0 || c.grid_y0 || c.grid_nx || c.grid_ny;
  if (!any) return std::nullopt;
  require_key(c.grid_x0 && c.grid_y0 && c.grid_nx && c.grid_ny,
              "grid_x0, grid_y0, grid_nx and grid_ny must be given together");
  GridSpec g{*c.grid_x0, *c.grid_y0, c.grid_cell, *c.grid_nx, *c.grid_ny};
  g.validate();
  return g;
}

// Covariate rasters fix the grid; without covariates it comes from the
// config or covers the sites with a margin of grid_margin * theta.
GridInputs prediction_grid(Context& ctx, const DataTable& data, const ParamVector& params) {
  const RunConfig& c = ctx.config;
  const auto b = data.sites.num_covariates();
  if (static_cast<Index>(c.grid_covariates.size()) != b)
    throw Error(ErrorCode::DimensionMismatch, "grid_covariates lists " + std::to_string(c.grid_covariates.size()) +
                                                  " rasters but the data has " + std::to_string(b) + " covariates");
  GridInputs out;
  if (b == 0) {
    if (auto g = explicit_grid(c)) {
      out.grid = *g;
    } else {
      out.grid = GridSpec::covering(data.sites.coords(), c.grid_margin * params.theta, c.grid_cell);
    }
    out.covariates = Matrix(out.grid.num_cells(), 0);
    return out;
  }
  if (explicit_grid(c)) ctx.warnings.push_back("grid keys ignored: the covariate rasters define the grid");
  Matrix raw;
  for (Index j = 0; j < b; ++j) {
    const std::string& path = c.grid_covariates[static_cast<std::size_t>(j)];
    const Surface s = read_grid(path, SurfaceKind::Covariate);
    if (j == 0) {
      out.grid = s.grid;
      raw.resize(s.grid.num_cells(), b);
    } else if (!(s.grid == out.grid)) {
      throw Error(ErrorCode::DimensionMismatch, "raster '" + path + "' is on a different grid than the first one");
    }
    raw.col(j) = s.values;
  }
  out.covariates = data.rescaling.apply(raw);
  return out;
}

void stage_fit(Context& ctx, Outputs& out, const DataTable& data, const FitResult& fit) {
  const InfoMatrix info = fisher_information(fit.params, data.sites);
  if (info.phi_finite_difference) ctx.warnings.push_back("alpha != 1: phi derivatives by finite differences");
  const auto wald = try_wald(ctx, fit.params, info, data.sites.num_observed());
  out.add("params.csv", format_params(wald ? rows_from(wald->intervals) : rows_without_intervals(fit.params)));

  std::string trace = "iteration,loglik\n";
  for (std::size_t i = 0; i < fit.loglik_trace.size(); ++i)
    trace += std::to_string(i) + "," + format_double(fit.loglik_trace[i]) + "\n";
  out.add("loglik_trace.csv", std::move(trace));

  std::string w = "x,y,w_hat,variance\n";
  for (Index i = 0; i < data.sites.size(); ++i) {
    const Point p = ctx.frame.from_local(data.sites.coords()[static_cast<std::size_t>(i)]);
    w += format_double(p.x) + "," + format_double(p.y) + "," + format_double(fit.e_step.w_hat[i]) + "," +
         format_double(fit.e_step.A_hat(i, i)) + "\n";
  }
  out.add("w_hat.csv", std::move(w));
  out.add("info_matrix.csv", format_matrix(info.labels, info.I_tilde));
  out.add("rescale.csv", format_rescaling(data.rescaling));
}

void cmd_fit(Context& ctx, Outputs& out) {
  const DataTable data = load_data(ctx);
  require_key(ctx.config.params.empty(), "fit does not take `params`");
  const FitResult fit = fit_model(ctx, data.sites);
  stage_fit(ctx, out, data, fit);
}

void cmd_simulate(Context& ctx, Outputs& out) {
  const DataTable data = load_data(ctx);
  const FitResult model = obtain_model(ctx, data);
  const SiteSet sim = simulate(model.params, data.sites, ctx.config.seed);
  out.add("simulated.csv", format_data(data, sim.values()));
}

void cmd_bootstrap(Context& ctx, Outputs& out) {
  const RunConfig& c = ctx.config;
  const DataTable data = load_data(ctx);
  const FitResult model = obtain_model(ctx, data);

  BootstrapOptions opts;
  opts.replicates = c.replicates;
  opts.filter = filter_of(c);
  opts.level = c.level;
  opts.seed = c.seed;
  opts.em = em_options(c, data.sites);
  opts.threads = ctx.threads;
  const BootstrapResult boot = bootstrap(model, data.sites, opts);
  const BootstrapSample& s = boot.sample;
  ctx.details["bootstrap"] = {{"requested", s.requested}, {"kept", s.kept.size()},   {"failed", s.failed},
                              {"nonconverged", s.nonconverged}, {"filtered", s.filtered}, {"filter", s.filter_rule}};
  if (s.kept.empty()) throw Error(ErrorCode::OptimizerFailure, "no bootstrap replicate was kept");

  const double dmax = max_pairwise_distance(distance_matrix(data.sites));
  std::string sample = "replicate,converged,kept";
  for (const auto& l : boot.labels) sample += "," + l;
  sample += "\n";
  for (std::size_t r = 0; r < s.raw.size(); ++r) {
    const bool kept = s.raw_converged[r] && !opts.filter.rejects(s.raw[r], dmax);
    sample += std::to_string(r) + "," + (s.raw_converged[r] ? "1" : "0") + "," + (kept ? "1" : "0");
    const Vector v = s.raw[r].free_values();
    for (Index j = 0; j < v.size(); ++j) sample += "," + format_double(v[j]);
    sample += "\n";
  }
  out.add("sample.csv", std::move(sample));
  out.add("empirical_cov.csv", format_matrix(boot.labels, boot.covariance));

  const InfoMatrix info = fisher_information(model.params, data.sites);
  out.add("info_matrix.csv", format_matrix(info.labels, info.I_tilde));
  out.add("params.csv", format_params(rows_from(boot.intervals)));

  const auto wald = try_wald(ctx, model.params, info, data.sites.num_observed());
  WaldResult none;
  std::string cmp = "parameter,wald,bootstrap\n";
  for (const auto& v : compare_variances(wald ? *wald : none, boot))
    cmp += v.label + "," + format_double(v.wald) + "," + format_double(v.bootstrap) + "\n";
  out.add("variance_comparison.csv", std::move(cmp));
}

void cmd_predict(Context& ctx, Outputs& out) {
  const RunConfig& c = ctx.config;
  const DataTable data = load_data(ctx);
  const FitResult model = obtain_model(ctx, data);
  const GridInputs grid = prediction_grid(ctx, data, model.params);

  out.add("potential.csv", format_grid(potential_surface(model.params, data.sites, grid.grid, grid.covariates)));
  out.add("conditional.csv", format_grid(conditional_surface(model.params, data.sites, grid.grid, grid.covariates)));
  ctx.details["grid"] = {{"x0", grid.grid.x0}, {"y0", grid.grid.y0}, {"cell", grid.grid.cell},
                         {"nx", grid.grid.nx}, {"ny", grid.grid.ny}};

  UncertaintySource source;
  if ((c.uncertainty == "auto" || c.uncertainty == "bootstrap") && !c.sample.empty()) {
    source.bootstrap_sample = read_sample(c.sample, model.params);
  } else if (c.uncertainty == "bootstrap") {
    throw Error(ErrorCode::ConfigError, "uncertainty = bootstrap needs `sample`");
  } else if (c.uncertainty != "none") {
    const InfoMatrix info = fisher_information(model.params, data.sites);
    if (c.uncertainty == "wald") {
      source.wald_covariance = wald_intervals(model.params, info, c.level, data.sites.num_observed()).covariance;
    } else if (auto w = try_wald(ctx, model.params, info, data.sites.num_observed())) {
      source.wald_covariance = w->covariance;
    }
  }
  if (!source.wald_covariance && !source.bootstrap_sample) {
    if (c.uncertainty != "none") ctx.warnings.push_back("no uncertainty source: standard deviation maps skipped");
    return;
  }
  const UncertaintyResult u = uncertainty_surfaces(model.params, data.sites, grid.grid, grid.covariates, source,
                                                   {c.draws, c.seed, ctx.threads});
  ctx.details["uncertainty"] = {{"source", u.used_bootstrap ? "bootstrap" : "wald"},
                                {"draws", u.draws},
                                {"redraws", u.redraws}};
  out.add("stddev.csv", format_grid(u.potential_sd));
  out.add("conditional_stddev.csv", format_grid(u.conditional_sd));
}

void cmd_total(Context& ctx, Outputs& out) {
  const RunConfig& c = ctx.config;
  Surface potential;
  InteractionSpec spec;
  if (!c.potential.empty()) {
    potential = read_grid(c.potential, SurfaceKind::Potential);
    if (c.phi) {
      spec = {*c.phi, c.alpha, InteractionFamily::ExponentialPower};
    } else {
      require_key(!c.params.empty() && !c.data.empty(), "total on a potential grid needs `phi` or `params` with `data`");
      const DataTable data = load_data(ctx);
      spec = interaction_spec(obtain_model(ctx, data).params);
    }
  } else {
    const DataTable data = load_data(ctx);
    const FitResult model = obtain_model(ctx, data);
    const GridInputs grid = prediction_grid(ctx, data, model.params);
    potential = potential_surface(model.params, data.sites, grid.grid, grid.covariates);
    spec = interaction_spec(model.params);
  }

  const TotalPotentialResult r = total_potential(potential, spec, {c.max_n, c.min_distance, c.rel_tol});
  ctx.details["total"] = {{"phi", spec.phi},
                          {"alpha", spec.alpha},
                          {"sites", r.chosen_sites.size()},
                          {"volume", r.v_curve.empty() ? 0.0 : r.v_curve.back()},
                          {"stopped", to_string(r.stopped_reason)}};

  std::string curve = "n,total,gain\n";
  std::string chosen = "order,x,y,cell,gain\n";
  for (std::size_t i = 0; i < r.v_curve.size(); ++i) {
    curve += std::to_string(i + 1) + "," + format_double(r.v_curve[i]) + "," + format_double(r.gains[i]) + "\n";
    const Point p = ctx.frame.from_local(r.chosen_sites[i]);
    chosen += std::to_string(i + 1) + "," + format_double(p.x) + "," + format_double(p.y) + "," +
              std::to_string(r.chosen_cells[i]) + "," + format_double(r.gains[i]) + "\n";
  }
  out.add("v_curve.csv", std::move(curve));
  out.add("chosen_sites.csv", std::move(chosen));
}

// 1 / (d_min / distance_unit + distance_offset), d_min being the distance
// to the nearest listed point.
void cmd_covar_dist(Context& ctx, Outputs& out) {
  const RunConfig& c = ctx.config;
  require_key(!c.streets.empty(), "covar-dist needs `streets`");
  const std::vector<Point> pts = read_points(c.streets, ctx.frame);
  const GridSpec grid = explicit_grid(c).value_or(GridSpec::covering(pts, c.grid_margin * c.grid_cell, c.grid_cell));
  Vector v(grid.num_cells());
  for (Index k = 0; k < grid.num_cells(); ++k) {
    const Point node = grid.node(k);
    double dmin = std::numeric_limits<double>::infinity();
    for (const auto& p : pts) dmin = std::min(dmin, distance(node, p));
    v[k] = 1.0 / (dmin / c.distance_unit + c.distance_offset);
  }
  out.add("covariate.csv", format_grid(Surface(grid, v, SurfaceKind::Covariate)));
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string manifest(const Context& ctx, const std::vector<std::string>& outputs) {
  const std::string canonical = serialize(ctx.config);
  json m;
  m["command"] = to_string(ctx.command);
  m["seed"] = ctx.config.seed;
  m["config_hash"] = "fnv1a64:" + hex64(fnv1a(canonical));
  m["config"] = canonical;
  m["versions"] = {{"geopot", GEOPOT_VERSION},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"boost", BOOST_LIB_VERSION},
                   {"compiler", __VERSION__}};
  m["timestamp_utc"] = utc_timestamp();
  m["threads"] = ctx.threads;
  m["outputs"] = outputs;
  m["warnings"] = ctx.warnings;
  m["details"] = ctx.details;
  return m.dump(2) + "\n";
}

}  // namespace

std::optional<Command> parse_command(std::string_view name) {
  static const std::map<std::string_view, Command> names{
      {"fit", Command::Fit},       {"simulate", Command::Simulate}, {"predict", Command::Predict},
      {"bootstrap", Command::Bootstrap}, {"total", Command::Total}, {"covar-dist", Command::CovarDist}};
  const auto it = names.find(name);
  if (it == names.end()) return std::nullopt;
  return it->second;
}

const char* to_string(Command command) noexcept {
  switch (command) {
    case Command::Fit: return "fit";
    case Command::Simulate: return "simulate";
    case Command::Predict: return "predict";
    case Command::Bootstrap: return "bootstrap";
    case Command::Total: return "total";
    case Command::CovarDist: return "covar-dist";
  }
  return "unknown";
}

int exit_code_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ConfigError:
      return kExitConfig;
    case ErrorCode::InvalidArgument:
    case ErrorCode::AllMissing:
    case ErrorCode::CovariateCoverageGap:
    case ErrorCode::ParseError:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::IoError:
      return kExitInput;
    case ErrorCode::NonPositiveTheta:
    case ErrorCode::AlphaNotOne:
    case ErrorCode::SingularCovariance:
    case ErrorCode::RankDeficientX:
    case ErrorCode::OptimizerFailure:
    case ErrorCode::SingularInformation:
    case ErrorCode::NoUncertaintySource:
    case ErrorCode::EmptyFeasibleSet:
      return kExitNumerical;
  }
  return kExitInternal;
}

RunReport run(Command command, const RunConfig& config) {
  config.validate();
  Context ctx{config, command, frame_of(config), resolve_threads(config.threads), {}, json::object()};
  Outputs out(config.out);
  switch (command) {
    case Command::Fit: cmd_fit(ctx, out); break;
    case Command::Simulate: cmd_simulate(ctx, out); break;
    case Command::Predict: cmd_predict(ctx, out); break;
    case Command::Bootstrap: cmd_bootstrap(ctx, out); break;
    case Command::Total: cmd_total(ctx, out); break;
    case Command::CovarDist: cmd_covar_dist(ctx, out); break;
  }
  std::vector<std::string> names = out.names();
  names.push_back("manifest.json");
  out.add("manifest.json", manifest(ctx, names));
  out.commit();
  return {names, ctx.warnings};
}

int run_and_report(Command command, const RunConfig& config, std::ostream& err) {
  try {
    const RunReport r = run(command, config);
    for (const auto& w : r.warnings) err << "warning: " << w << "\n";
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error: IoError: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace geopot::cli
