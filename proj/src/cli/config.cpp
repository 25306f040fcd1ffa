#include "geopot/cli/config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "geopot/cli/csv_io.hpp"
#include "geopot/error.hpp"

namespace geopot::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw std::invalid_argument("not a number: '" + v + "'");
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("not a boolean: '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join_list(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

// Setter from text and getter to text (nullopt when unset).
struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::optional<std::string>(const RunConfig&)> get;
};

Field text(std::string key, std::string RunConfig::*m) {
  return {key, [m](RunConfig& c, const std::string& v) { c.*m = v; },
          [m](const RunConfig& c) -> std::optional<std::string> { return c.*m; }};
}

Field flag(std::string key, bool RunConfig::*m) {
  return {key, [m](RunConfig& c, const std::string& v) { c.*m = parse_bool(v); },
          [m](const RunConfig& c) -> std::optional<std::string> { return c.*m ? "true" : "false"; }};
}

template <class T>
Field number(std::string key, T RunConfig::*m) {
  return {key, [m](RunConfig& c, const std::string& v) { c.*m = parse_number<T>(v); },
          [m](const RunConfig& c) -> std::optional<std::string> {
            if constexpr (std::is_floating_point_v<T>) return format_double(c.*m);
            else return std::to_string(c.*m);
          }};
}

template <class T>
Field maybe(std::string key, std::optional<T> RunConfig::*m) {
  return {key, [m](RunConfig& c, const std::string& v) { c.*m = parse_number<T>(v); },
          [m](const RunConfig& c) -> std::optional<std::string> {
            if (!(c.*m)) return std::nullopt;
            if constexpr (std::is_floating_point_v<T>) return format_double(*(c.*m));
            else return std::to_string(*(c.*m));
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      text("data", &RunConfig::data),
      {"grid_covariates", [](RunConfig& c, const std::string& v) { c.grid_covariates = split_list(v); },
       [](const RunConfig& c) -> std::optional<std::string> {
         if (c.grid_covariates.empty()) return std::nullopt;
         return join_list(c.grid_covariates);
       }},
      text("params", &RunConfig::params),
      text("sample", &RunConfig::sample),
      text("potential", &RunConfig::potential),
      text("streets", &RunConfig::streets),
      text("coordinates", &RunConfig::coordinates),
      maybe("ref_lon", &RunConfig::ref_lon),
      maybe("ref_lat", &RunConfig::ref_lat),
      flag("rescale_covariates", &RunConfig::rescale_covariates),
      flag("mu_fixed_zero", &RunConfig::mu_fixed_zero),
      number("alpha", &RunConfig::alpha),
      maybe("phi", &RunConfig::phi),
      maybe("theta_lo", &RunConfig::theta_lo),
      maybe("theta_hi", &RunConfig::theta_hi),
      maybe("phi_lo", &RunConfig::phi_lo),
      maybe("phi_hi", &RunConfig::phi_hi),
      number("max_iter", &RunConfig::max_iter),
      number("tol", &RunConfig::tol),
      number("multistart", &RunConfig::multistart),
      number("replicates", &RunConfig::replicates),
      text("filter", &RunConfig::filter),
      number("filter_threshold", &RunConfig::filter_threshold),
      number("level", &RunConfig::level),
      number("seed", &RunConfig::seed),
      maybe("grid_x0", &RunConfig::grid_x0),
      maybe("grid_y0", &RunConfig::grid_y0),
      number("grid_cell", &RunConfig::grid_cell),
      maybe("grid_nx", &RunConfig::grid_nx),
      maybe("grid_ny", &RunConfig::grid_ny),
      number("grid_margin", &RunConfig::grid_margin),
      text("uncertainty", &RunConfig::uncertainty),
      number("draws", &RunConfig::draws),
      number("max_n", &RunConfig::max_n),
      number("min_distance", &RunConfig::min_distance),
      number("rel_tol", &RunConfig::rel_tol),
      number("distance_unit", &RunConfig::distance_unit),
      number("distance_offset", &RunConfig::distance_offset),
      text("out", &RunConfig::out),
      number("threads", &RunConfig::threads),
  };
  return table;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ConfigError, what);
}

void require_file(const std::string& path, const std::string& key) {
  if (path.empty()) return;
  if (!std::filesystem::is_regular_file(path)) throw Error(ErrorCode::IoError, key + ": no such file '" + path + "'");
}

}  // namespace

void RunConfig::validate() const {
  require(coordinates == "meters" || coordinates == "degrees", "coordinates must be 'meters' or 'degrees'");
  require(coordinates == "meters" || (ref_lon && ref_lat), "coordinates = degrees needs ref_lon and ref_lat");
  require(alpha > 0.0, "alpha must be positive");
  require(!phi || *phi > 0.0, "phi must be positive");
  for (const auto& b : {theta_lo, theta_hi, phi_lo, phi_hi}) require(!b || *b > 0.0, "search bounds must be positive");
  require(!(theta_lo && theta_hi) || *theta_lo < *theta_hi, "theta_lo must be below theta_hi");
  require(!(phi_lo && phi_hi) || *phi_lo < *phi_hi, "phi_lo must be below phi_hi");
  require(max_iter >= 1, "max_iter must be >= 1");
  require(tol > 0.0, "tol must be positive");
  require(multistart >= 0, "multistart must be >= 0");
  require(replicates >= 1, "replicates must be >= 1");
  require(filter == "phi_above_max_distance" || filter == "phi_above" || filter == "none",
          "filter must be phi_above_max_distance, phi_above or none");
  require(filter != "phi_above" || filter_threshold > 0.0, "filter = phi_above needs a positive filter_threshold");
  require(level > 0.0 && level < 1.0, "level must lie in (0, 1)");
  require(grid_cell > 0.0, "grid_cell must be positive");
  require(!grid_nx || *grid_nx >= 1, "grid_nx must be >= 1");
  require(!grid_ny || *grid_ny >= 1, "grid_ny must be >= 1");
  require(grid_margin >= 0.0, "grid_margin must be >= 0");
  require(uncertainty == "auto" || uncertainty == "wald" || uncertainty == "bootstrap" || uncertainty == "none",
          "uncertainty must be auto, wald, bootstrap or none");
  require(draws >= 1, "draws must be >= 1");
  require(max_n >= 1, "max_n must be >= 1");
  require(min_distance >= 0.0, "min_distance must be >= 0");
  require(rel_tol >= 0.0, "rel_tol must be >= 0");
  require(distance_unit > 0.0, "distance_unit must be positive");
  require(distance_offset > 0.0, "distance_offset must be positive");
  require(!out.empty(), "out must not be empty");

  require_file(data, "data");
  for (const auto& p : grid_covariates) require_file(p, "grid_covariates");
  require_file(params, "params");
  require_file(sample, "sample");
  require_file(potential, "potential");
  require_file(streets, "streets");
}

RunConfig parse_config(const std::string& text) {
  std::map<std::string, const Field*> index;
  for (const auto& f : fields()) index[f.key] = &f;

  RunConfig c;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw Error(ErrorCode::ConfigError, where + "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = index.find(key);
    if (it == index.end()) throw Error(ErrorCode::ConfigError, where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw Error(ErrorCode::ConfigError, where + "repeated key '" + key + "'");
    try {
      it->second->set(c, value);
    } catch (const std::invalid_argument& e) {
      throw Error(ErrorCode::ConfigError, where + key + ": " + e.what());
    }
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize(const RunConfig& config) {
  std::string s;
  for (const auto& f : fields())
    if (const auto v = f.get(config)) s += f.key + " = " + *v + "\n";
  return s;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace geopot::cli
