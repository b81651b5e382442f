#include "reachmm/config.hpp"

#include "reachmm/errors.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace reachmm {

namespace {

using nlohmann::json;

struct Ctx {
  const std::string& text;
  const std::string& source;

  // Line of the first occurrence of the key path in the source text (0 if unknown).
  std::size_t line_of(const std::vector<std::string>& keys) const {
    if (text.empty()) return 0;
    std::size_t pos = 0;
    for (const auto& k : keys) {
      const auto found = text.find("\"" + k + "\"", pos);
      if (found == std::string::npos) break;
      pos = found;
    }
    if (pos == 0) return 0;
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
  }

  [[noreturn]] void fail(const std::vector<std::string>& keys, const std::string& msg) const {
    std::string pointer;
    for (const auto& k : keys) pointer += "/" + k;
    if (pointer.empty()) pointer = "/";
    const auto line = line_of(keys);
    if (line > 0) throw ConfigError(fmt::format("{}:{}: {}: {}", source, line, pointer, msg));
    throw ConfigError(fmt::format("{}: {}: {}", source, pointer, msg));
  }
};

void check_keys(const Ctx& ctx, const json& obj, const std::vector<std::string>& path,
                const std::set<std::string>& allowed) {
  for (const auto& [k, _] : obj.items()) {
    if (!allowed.contains(k)) {
      auto p = path;
      p.push_back(k);
      ctx.fail(p, "unknown key");
    }
  }
}

double get_number(const Ctx& ctx, const json& v, const std::vector<std::string>& path, bool allow_inf = false) {
  if (v.is_number()) return v.get<double>();
  if (allow_inf && v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf" || s == "Infinity" || s == "+inf") return std::numeric_limits<double>::infinity();
  }
  ctx.fail(path, allow_inf ? "expected a number or \"inf\"" : "expected a number");
}

Vec get_vector(const Ctx& ctx, const json& v, const std::vector<std::string>& path, bool allow_inf = false) {
  if (!v.is_array()) ctx.fail(path, "expected an array of numbers");
  Vec out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    auto p = path;
    p.push_back(std::to_string(i));
    out(static_cast<Eigen::Index>(i)) = get_number(ctx, v[i], p, allow_inf);
  }
  return out;
}

Mat get_matrix(const Ctx& ctx, const json& v, const std::vector<std::string>& path) {
  if (!v.is_array() || v.empty() || !v[0].is_array()) ctx.fail(path, "expected an array of rows");
  const auto rows = static_cast<Eigen::Index>(v.size());
  const auto cols = static_cast<Eigen::Index>(v[0].size());
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Vec row = get_vector(ctx, v[static_cast<std::size_t>(r)], path);
    if (row.size() != cols) ctx.fail(path, "rows have different lengths");
    m.row(r) = row.transpose();
  }
  return m;
}

IntervalVector get_box(const Ctx& ctx, const json& v, const std::vector<std::string>& path) {
  if (!v.is_object() || !v.contains("lo") || !v.contains("hi")) ctx.fail(path, "expected {\"lo\": [...], \"hi\": [...]}");
  check_keys(ctx, v, path, {"lo", "hi"});
  auto pl = path, ph = path;
  pl.push_back("lo");
  ph.push_back("hi");
  const Vec lo = get_vector(ctx, v["lo"], pl);
  const Vec hi = get_vector(ctx, v["hi"], ph);
  try {
    return {lo, hi};
  } catch (const std::exception& e) {
    ctx.fail(path, e.what());
  }
}

int get_int(const Ctx& ctx, const json& v, const std::vector<std::string>& path) {
  if (!v.is_number_integer()) ctx.fail(path, "expected an integer");
  return v.get<int>();
}

json vec_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::isinf(v(i))) {
      a.push_back("inf");
    } else {
      a.push_back(v(i));
    }
  }
  return a;
}

json mat_json(const Mat& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(vec_json(m.row(r).transpose()));
  return a;
}

json box_json(const IntervalVector& b) { return {{"lo", vec_json(b.lo())}, {"hi", vec_json(b.hi())}}; }

std::size_t system_state_dim(const SystemConfig& s) {
  if (s.name == "vehicle") return 4;
  if (s.name == "double-integrator") return 2;
  return static_cast<std::size_t>(s.a.rows());
}

}  // namespace

nlohmann::json ExperimentConfig::to_json() const {
  json j;
  json sys{{"name", system.name}};
  if (system.name == "vehicle") {
    sys["l_f"] = system.vehicle.l_f;
    sys["l_r"] = system.vehicle.l_r;
  } else if (system.name == "linear") {
    sys["A"] = mat_json(system.a);
    sys["B"] = mat_json(system.b);
    sys["discrete"] = system.discrete;
  }
  j["system"] = sys;
  if (network.constant) {
    j["network"] = {{"constant", vec_json(*network.constant)}};
  } else if (network.inline_json) {
    j["network"] = *network.inline_json;
  } else {
    j["network"] = {{"path", network.path.string()}, {"standin", network.standin}};
  }
  j["initial_set"] = box_json(initial_set);
  j["disturbance"] = box_json(disturbance);
  j["t0"] = t0;
  if (control_period) {
    j["control_period"] = *control_period;
  } else {
    j["control_instants"] = control_instants;
  }
  j["dt"] = dt;
  j["T"] = T;
  j["algorithm"] = {{"eps", vec_json(eps)},
                    {"gamma", gamma},
                    {"D_p", D_p},
                    {"D_N", D_N},
                    {"mode", std::string(to_string(mode))},
                    {"control_bounds", std::string(to_string(control_bounds))}};
  j["output_dir"] = output_dir.string();
  j["seed"] = seed;
  j["repetitions"] = repetitions;
  j["mc_count"] = mc_count;
  j["threads"] = threads;
  j["volume_coords"] = volume_coords;
  return j;
}

AlgorithmParams ExperimentConfig::algorithm_params() const {
  AlgorithmParams p;
  p.eps = ToleranceVector(eps);
  p.gamma = gamma;
  p.D_p = D_p;
  p.D_N = D_N;
  p.control_instants = control_period ? uniform_instants(t0, *control_period, T) : control_instants;
  p.T = T;
  p.dt = dt;
  p.mode = mode;
  p.threads = threads;
  return p;
}

ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir,
                              const std::string& source_text, const std::string& source_name) {
  const Ctx ctx{source_text, source_name};
  if (!j.is_object()) ctx.fail({}, "config must be a JSON object");
  check_keys(ctx, j, {},
             {"system", "network", "initial_set", "disturbance", "t0", "control_period", "control_instants", "dt",
              "T", "algorithm", "output_dir", "seed", "repetitions", "mc_count", "threads", "volume_coords",
              "description"});
  ExperimentConfig cfg;

  // system
  if (!j.contains("system")) ctx.fail({"system"}, "missing");
  const auto& js = j["system"];
  if (js.is_string()) {
    cfg.system.name = js.get<std::string>();
  } else if (js.is_object() && js.contains("name") && js["name"].is_string()) {
    cfg.system.name = js["name"].get<std::string>();
    check_keys(ctx, js, {"system"}, {"name", "l_f", "l_r", "A", "B", "discrete"});
    if (js.contains("l_f")) cfg.system.vehicle.l_f = get_number(ctx, js["l_f"], {"system", "l_f"});
    if (js.contains("l_r")) cfg.system.vehicle.l_r = get_number(ctx, js["l_r"], {"system", "l_r"});
    if (js.contains("A")) cfg.system.a = get_matrix(ctx, js["A"], {"system", "A"});
    if (js.contains("B")) cfg.system.b = get_matrix(ctx, js["B"], {"system", "B"});
    if (js.contains("discrete")) {
      if (!js["discrete"].is_boolean()) ctx.fail({"system", "discrete"}, "expected true or false");
      cfg.system.discrete = js["discrete"].get<bool>();
    }
  } else {
    ctx.fail({"system"}, "expected a system name or an object with a \"name\"");
  }
  const auto& sname = cfg.system.name;
  if (sname != "vehicle" && sname != "double-integrator" && sname != "linear") {
    ctx.fail({"system"}, fmt::format("unknown system '{}' (expected vehicle, double-integrator or linear)", sname));
  }
  if (sname == "vehicle" && !(cfg.system.vehicle.l_f > 0.0 && cfg.system.vehicle.l_r > 0.0)) {
    ctx.fail({"system"}, "l_f and l_r must be positive");
  }
  if (sname == "linear") {
    if (cfg.system.a.size() == 0 || cfg.system.b.size() == 0) ctx.fail({"system"}, "linear system needs A and B");
    if (cfg.system.a.rows() != cfg.system.a.cols() || cfg.system.b.rows() != cfg.system.a.rows()) {
      ctx.fail({"system"}, "A must be n x n and B n x p");
    }
  }
  const std::size_t n = system_state_dim(cfg.system);

  // network
  if (!j.contains("network")) ctx.fail({"network"}, "missing");
  const auto& jn = j["network"];
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
    return path.lexically_normal();
  };
  if (jn.is_string()) {
    cfg.network.path = resolve(jn.get<std::string>());
  } else if (jn.is_object() && jn.contains("path")) {
    check_keys(ctx, jn, {"network"}, {"path", "standin"});
    if (!jn["path"].is_string()) ctx.fail({"network", "path"}, "expected a string");
    cfg.network.path = resolve(jn["path"].get<std::string>());
    cfg.network.standin = jn.value("standin", false);
  } else if (jn.is_object() && jn.contains("constant")) {
    check_keys(ctx, jn, {"network"}, {"constant"});
    cfg.network.constant = get_vector(ctx, jn["constant"], {"network", "constant"});
  } else if (jn.is_object() && jn.contains("layers")) {
    cfg.network.inline_json = jn;
  } else {
    ctx.fail({"network"}, "expected a path, {\"path\": ...}, {\"constant\": [...]} or an inline network");
  }

  // sets
  if (!j.contains("initial_set")) ctx.fail({"initial_set"}, "missing");
  cfg.initial_set = get_box(ctx, j["initial_set"], {"initial_set"});
  if (cfg.initial_set.dim() != n) {
    ctx.fail({"initial_set"}, fmt::format("has dimension {}, system state dimension is {}", cfg.initial_set.dim(), n));
  }
  if (j.contains("disturbance")) {
    cfg.disturbance = get_box(ctx, j["disturbance"], {"disturbance"});
  } else {
    cfg.disturbance = IntervalVector(Vec(0), Vec(0));
  }
  if (cfg.disturbance.dim() != 0) {
    ctx.fail({"disturbance"}, "the shipped systems take no disturbance input; use an empty box");
  }

  // time
  if (j.contains("t0")) cfg.t0 = get_number(ctx, j["t0"], {"t0"});
  if (!j.contains("T")) ctx.fail({"T"}, "missing");
  cfg.T = get_number(ctx, j["T"], {"T"});
  if (j.contains("dt")) cfg.dt = get_number(ctx, j["dt"], {"dt"});
  if (j.contains("control_period") == j.contains("control_instants")) {
    ctx.fail({"control_period"}, "give exactly one of control_period and control_instants");
  }
  if (j.contains("control_period")) {
    cfg.control_period = get_number(ctx, j["control_period"], {"control_period"});
    if (!(*cfg.control_period > 0.0)) ctx.fail({"control_period"}, "must be positive");
    if (!(cfg.T >= cfg.t0)) ctx.fail({"T"}, "T must not precede t0");
  } else {
    const Vec ts = get_vector(ctx, j["control_instants"], {"control_instants"});
    cfg.control_instants.assign(ts.data(), ts.data() + ts.size());
    if (!cfg.control_instants.empty()) cfg.t0 = cfg.control_instants.front();
  }

  // algorithm
  if (!j.contains("algorithm")) ctx.fail({"algorithm"}, "missing");
  const auto& ja = j["algorithm"];
  if (!ja.is_object()) ctx.fail({"algorithm"}, "expected an object");
  check_keys(ctx, ja, {"algorithm"}, {"eps", "gamma", "D_p", "D_N", "mode", "control_bounds"});
  if (!ja.contains("eps")) ctx.fail({"algorithm", "eps"}, "missing");
  cfg.eps = get_vector(ctx, ja["eps"], {"algorithm", "eps"}, true);
  if (ja.contains("gamma")) cfg.gamma = get_number(ctx, ja["gamma"], {"algorithm", "gamma"});
  if (ja.contains("D_p")) cfg.D_p = get_int(ctx, ja["D_p"], {"algorithm", "D_p"});
  if (ja.contains("D_N")) cfg.D_N = get_int(ctx, ja["D_N"], {"algorithm", "D_N"});
  try {
    if (ja.contains("mode")) cfg.mode = parse_partition_mode(ja["mode"].get<std::string>());
  } catch (const std::exception& e) {
    ctx.fail({"algorithm", "mode"}, e.what());
  }
  try {
    if (ja.contains("control_bounds")) cfg.control_bounds = parse_control_bounds(ja["control_bounds"].get<std::string>());
  } catch (const std::exception& e) {
    ctx.fail({"algorithm", "control_bounds"}, e.what());
  }
  for (Eigen::Index i = 0; i < cfg.eps.size(); ++i) {
    if (std::isnan(cfg.eps(i)) || cfg.eps(i) < 0.0) ctx.fail({"algorithm", "eps"}, "entries must be in [0, inf]");
  }

  // run settings
  if (j.contains("output_dir")) {
    if (!j["output_dir"].is_string()) ctx.fail({"output_dir"}, "expected a string");
    cfg.output_dir = j["output_dir"].get<std::string>();
  }
  auto get_count = [&](const char* key, auto& dst) {
    if (!j.contains(key)) return;
    if (!j[key].is_number_unsigned() && !(j[key].is_number_integer() && j[key].get<long long>() >= 0)) {
      ctx.fail({key}, "expected a non-negative integer");
    }
    dst = j[key].get<std::remove_reference_t<decltype(dst)>>();
  };
  get_count("seed", cfg.seed);
  get_count("repetitions", cfg.repetitions);
  get_count("mc_count", cfg.mc_count);
  get_count("threads", cfg.threads);
  if (j.contains("volume_coords")) {
    if (!j["volume_coords"].is_array()) ctx.fail({"volume_coords"}, "expected an array of indices");
    for (const auto& c : j["volume_coords"]) {
      if (!c.is_number_unsigned() || c.get<std::size_t>() >= n) ctx.fail({"volume_coords"}, "index out of range");
      cfg.volume_coords.push_back(c.get<std::size_t>());
    }
  }

  const bool discrete = sname == "double-integrator" || (sname == "linear" && cfg.system.discrete);
  try {
    cfg.algorithm_params().validate(n, discrete);
  } catch (const std::exception& e) {
    ctx.fail({"algorithm"}, e.what());
  }
  return cfg;
}

void apply_override(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError(fmt::format("--set expects key=value, got '{}'", assignment));
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* node = &j;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i].empty()) throw ConfigError(fmt::format("--set: empty path component in '{}'", key));
    if (!node->is_object()) {
      if (node->is_null()) {
        *node = json::object();
      } else {
        throw ConfigError(fmt::format("--set: '{}' does not name an object", key));
      }
    }
    node = &(*node)[parts[i]];
  }
  *node = value;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
  for (const auto& o : overrides) apply_override(j, o);
  return parse_config(j, path.parent_path(), text, path.string());
}

Experiment build_experiment(const ExperimentConfig& cfg) {
  Experiment ex;
  ex.config = cfg;
  const std::size_t n = system_state_dim(cfg.system);
  try {
    if (cfg.network.constant) {
      ex.network = std::make_shared<const MLPNetwork>(MLPNetwork::constant(n, *cfg.network.constant));
    } else if (cfg.network.inline_json) {
      ex.network = std::make_shared<const MLPNetwork>(MLPNetwork::from_json(*cfg.network.inline_json));
    } else {
      ex.network = std::make_shared<const MLPNetwork>(MLPNetwork::load(cfg.network.path));
    }
  } catch (const std::exception& e) {
    throw ConfigError(fmt::format("network: {}", e.what()));
  }

  try {
    const auto& s = cfg.system;
    if (s.name == "vehicle") {
      ex.system = make_vehicle_system(s.vehicle);
      ex.model = std::make_shared<const ContinuousClosedLoop>(ex.system, ex.network, cfg.disturbance,
                                                              cfg.control_bounds);
    } else if (s.name == "double-integrator") {
      ex.system = make_double_integrator_system();
      ex.model = std::make_shared<const DiscreteLTIClosedLoop>(double_integrator_a(), double_integrator_b(),
                                                               ex.network);
    } else {
      const auto nn = s.a.rows();
      const Mat a_cont = s.discrete ? Mat(s.a - Mat::Identity(nn, nn)) : s.a;
      ex.system = std::make_shared<const OpenLoopSystem>("linear", static_cast<std::size_t>(nn),
                                                         static_cast<std::size_t>(s.b.cols()), 0,
                                                         linear_field(a_cont, s.b), linear_decomposition(a_cont, s.b));
      if (s.discrete) {
        ex.model = std::make_shared<const DiscreteLTIClosedLoop>(s.a, s.b, ex.network);
      } else {
        ex.model = std::make_shared<const ContinuousClosedLoop>(ex.system, ex.network, cfg.disturbance,
                                                                cfg.control_bounds);
      }
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(fmt::format("system: {}", e.what()));
  }
  ex.params = cfg.algorithm_params();
  return ex;
}

}  // namespace reachmm
