#include "synthreg/config.hpp"

#include <fstream>
#include <initializer_list>
#include <string_view>

namespace synthreg {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& message) { throw Error(ErrorKind::parse, message); }

void require_object(const json& j, std::string_view what) {
  if (!j.is_object()) fail(std::string(what) + " must be a JSON object");
}

void allow_keys(const json& j, std::string_view what, std::initializer_list<std::string_view> keys) {
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (auto k : keys) known = known || key == k;
    if (!known) fail(std::string(what) + ": unknown field '" + key + "'");
  }
}

template <typename T>
T get(const json& j, const char* key, std::string_view what) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(std::string(what) + ": field '" + key + "' is missing or has the wrong type");
  }
}

template <typename T>
std::optional<T> get_optional(const json& j, const char* key, std::string_view what) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return get<T>(j, key, what);
}

Eigen::VectorXd to_vector(const json& j, std::string_view what) {
  if (!j.is_array()) fail(std::string(what) + " must be an array of numbers");
  Eigen::VectorXd v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) fail(std::string(what) + " must be an array of numbers");
    v[static_cast<Index>(i)] = j[i].get<double>();
  }
  return v;
}

Eigen::MatrixXd to_matrix(const json& j, std::string_view what) {
  if (!j.is_array() || j.empty()) fail(std::string(what) + " must be a non-empty array of rows");
  const auto rows = static_cast<Index>(j.size());
  Eigen::MatrixXd m;
  for (Index r = 0; r < rows; ++r) {
    const Eigen::VectorXd row = to_vector(j[static_cast<std::size_t>(r)], what);
    if (r == 0) m.resize(rows, row.size());
    if (row.size() != m.cols()) fail(std::string(what) + " rows differ in length");
    m.row(r) = row.transpose();
  }
  return m;
}

std::optional<Eigen::VectorXd> optional_vector(const json& j, const char* key, std::string_view what) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return to_vector(j.at(key), std::string(what) + "." + key);
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Index r = 0; r < m.rows(); ++r) rows.push_back(vector_json(m.row(r).transpose()));
  return rows;
}

PenaltyKind parse_penalty(const std::string& name) {
  for (auto k : {PenaltyKind::none, PenaltyKind::ridge, PenaltyKind::entropy, PenaltyKind::quadratic}) {
    if (to_string(k) == name) return k;
  }
  fail("unknown penalty '" + name + "'");
}

LossKind parse_loss(const std::string& name) {
  if (name == "squared") return LossKind::squared;
  if (name == "absolute") return LossKind::absolute;
  fail("unknown loss '" + name + "'");
}

Check parse_check(const json& j) {
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    if (name == "regret_bound") return {CheckKind::regret_bound, 0.0};
    if (name == "expected_loss") return {CheckKind::expected_loss, 0.0};
    fail("unknown check '" + name + "'");
  }
  if (j.is_object()) {
    allow_keys(j, "check", {"regret_at_most"});
    return {CheckKind::regret_at_most, get<double>(j, "regret_at_most", "check")};
  }
  fail("checks must be strings or {\"regret_at_most\": value}");
}

}  // namespace

StrategyConfig strategy_from_json(const json& j) {
  constexpr std::string_view what = "strategy";
  if (j.is_string()) {
    const auto kind = parse_strategy_kind(j.get<std::string>());
    if (!kind) fail("unknown strategy kind '" + j.get<std::string>() + "'");
    StrategyConfig c;
    c.kind = *kind;
    return c;
  }
  require_object(j, what);
  allow_keys(j, what, {"kind", "label", "weights", "penalty", "eta", "H", "X", "x", "loss", "timing", "base", "alpha"});
  StrategyConfig c;
  const auto kind_name = get<std::string>(j, "kind", what);
  const auto kind = parse_strategy_kind(kind_name);
  if (!kind) fail("unknown strategy kind '" + kind_name + "'");
  c.kind = *kind;
  c.label = get_optional<std::string>(j, "label", what).value_or("");
  c.weights = optional_vector(j, "weights", what);
  if (auto p = get_optional<std::string>(j, "penalty", what)) c.penalty = parse_penalty(*p);
  if (j.contains("eta") && !j.at("eta").is_null()) {
    if (j.at("eta").is_string()) {
      if (j.at("eta").get<std::string>() != "auto") fail("strategy: eta must be a number or \"auto\"");
    } else {
      c.eta = get<double>(j, "eta", what);
    }
  }
  if (j.contains("H")) c.H = to_matrix(j.at("H"), "strategy.H");
  if (j.contains("X")) c.X = to_matrix(j.at("X"), "strategy.X");
  if (auto x = optional_vector(j, "x", what)) c.x = *x;
  if (auto l = get_optional<std::string>(j, "loss", what)) c.loss = parse_loss(*l);
  c.timing = optional_vector(j, "timing", what);
  if (j.contains("base") && !j.at("base").is_null()) {
    c.base = std::make_shared<const StrategyConfig>(strategy_from_json(j.at("base")));
  }
  c.alpha = get_optional<double>(j, "alpha", what).value_or(0.25);
  return c;
}

json to_json(const StrategyConfig& c) {
  json j{{"kind", std::string(to_string(c.kind))}};
  if (!c.label.empty()) j["label"] = c.label;
  if (c.weights) j["weights"] = vector_json(*c.weights);
  if (c.kind == StrategyKind::ftrl) {
    j["penalty"] = std::string(to_string(c.penalty));
    j["eta"] = c.eta ? json(*c.eta) : json("auto");
    j["loss"] = std::string(to_string(c.loss));
    if (c.penalty == PenaltyKind::quadratic) {
      j["H"] = matrix_json(c.H);
      j["X"] = matrix_json(c.X);
      j["x"] = vector_json(c.x);
    }
  }
  if (c.timing) j["timing"] = vector_json(*c.timing);
  if (c.kind == StrategyKind::flh) {
    if (c.base) j["base"] = to_json(*c.base);
    j["alpha"] = c.alpha;
  }
  return j;
}

GeneratorSpec generator_from_json(const json& j) {
  constexpr std::string_view what = "generator";
  require_object(j, what);
  allow_keys(j, what,
             {"kind", "n", "t", "seed", "rank", "noise", "scale", "shift", "theta_a", "theta_b", "theta", "eps", "ar"});
  GeneratorSpec s;
  const auto name = get<std::string>(j, "kind", what);
  const auto kind = parse_generator_kind(name);
  if (!kind) fail("unknown generator kind '" + name + "'");
  s.kind = *kind;
  s.units = get<Index>(j, "n", what);
  s.periods = get<Index>(j, "t", what);
  s.seed = get_optional<std::uint64_t>(j, "seed", what).value_or(0);
  s.rank = get_optional<Index>(j, "rank", what).value_or(s.rank);
  s.noise = get_optional<double>(j, "noise", what).value_or(s.noise);
  s.scale = get_optional<double>(j, "scale", what).value_or(s.scale);
  s.shift = get_optional<Index>(j, "shift", what);
  s.theta_a = optional_vector(j, "theta_a", what);
  s.theta_b = optional_vector(j, "theta_b", what);
  s.theta = optional_vector(j, "theta", what);
  s.eps = get_optional<double>(j, "eps", what).value_or(s.eps);
  s.ar = get_optional<double>(j, "ar", what).value_or(s.ar);
  try {
    validate(s);
  } catch (const Error& e) {
    fail(std::string("generator: ") + e.what());
  }
  return s;
}

json to_json(const GeneratorSpec& s) {
  json j{{"kind", std::string(to_string(s.kind))}, {"n", s.units}, {"t", s.periods}, {"seed", s.seed}};
  switch (s.kind) {
    case GeneratorKind::factor_model:
      j["rank"] = s.rank;
      j["noise"] = s.noise;
      j["scale"] = s.scale;
      break;
    case GeneratorKind::piecewise_shift:
      if (s.shift) j["shift"] = *s.shift;
      if (s.theta_a) j["theta_a"] = vector_json(*s.theta_a);
      if (s.theta_b) j["theta_b"] = vector_json(*s.theta_b);
      break;
    case GeneratorKind::anti_fixed_theta:
      if (s.theta) j["theta"] = vector_json(*s.theta);
      j["eps"] = s.eps;
      break;
    case GeneratorKind::ar1_clipped:
      j["ar"] = s.ar;
      j["noise"] = s.noise;
      break;
    case GeneratorKind::iid_bounded:
      break;
  }
  return j;
}

TimingSpec timing_from_json(const json& j) {
  constexpr std::string_view what = "timing";
  TimingSpec t;
  if (j.is_string()) {
    const auto kind = parse_timing_kind(j.get<std::string>());
    if (!kind) fail("unknown timing kind '" + j.get<std::string>() + "'");
    t.kind = *kind;
    if (t.kind == TimingKind::hazard_regime) fail("timing: hazard_regime needs a hazard description");
    return t;
  }
  require_object(j, what);
  allow_keys(j, what, {"kind", "C", "seed", "spread", "hazard"});
  const auto name = get<std::string>(j, "kind", what);
  const auto kind = parse_timing_kind(name);
  if (!kind) fail("unknown timing kind '" + name + "'");
  t.kind = *kind;
  t.C = get_optional<double>(j, "C", what).value_or(1.0);
  if (!(t.C >= 1.0)) fail("timing: C must be at least 1");
  t.seed = get_optional<std::uint64_t>(j, "seed", what).value_or(0);
  t.spread = get_optional<double>(j, "spread", what).value_or(1.0);
  if (t.kind == TimingKind::hazard_regime) {
    if (!j.contains("hazard")) fail("timing: hazard_regime needs a hazard description");
    const json& h = j.at("hazard");
    require_object(h, "hazard");
    const auto type = get<std::string>(h, "type", "hazard");
    if (type == "constant") {
      allow_keys(h, "hazard", {"type", "rate"});
      const double rate = get<double>(h, "rate", "hazard");
      if (!(rate >= 0.0 && rate <= 1.0)) fail("hazard: rate must lie in [0, 1]");
      t.hazard = constant_hazard(rate);
    } else if (type == "logistic") {
      allow_keys(h, "hazard", {"type", "intercept", "slope"});
      t.hazard = logistic_hazard(get<double>(h, "intercept", "hazard"), get<double>(h, "slope", "hazard"));
    } else {
      fail("hazard: unknown type '" + type + "'");
    }
  }
  return t;
}

ExperimentConfig experiment_from_json(const json& j, const std::filesystem::path& base_dir) {
  constexpr std::string_view what = "config";
  require_object(j, what);
  allow_keys(j, what, {"generator", "panel", "strategies", "timing", "replications", "seed", "outputs", "checks",
                       "adaptive_regret"});
  ExperimentConfig c;
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  if (j.contains("generator")) c.generator = generator_from_json(j.at("generator"));
  if (auto p = get_optional<std::string>(j, "panel", what)) c.panel_path = resolve(*p);
  if (c.generator.has_value() == c.panel_path.has_value()) fail("config: give exactly one of 'generator' or 'panel'");

  if (!j.contains("strategies") || !j.at("strategies").is_array() || j.at("strategies").empty()) {
    fail("config: 'strategies' must be a non-empty array");
  }
  for (const auto& s : j.at("strategies")) c.strategies.push_back(strategy_from_json(s));
  if (j.contains("timing")) c.timing = timing_from_json(j.at("timing"));
  c.replications = get_optional<int>(j, "replications", what).value_or(1);
  if (c.replications < 1) fail("config: replications must be at least 1");
  if (c.panel_path && c.replications != 1) fail("config: a fixed panel runs exactly one replication");
  c.seed = get_optional<std::uint64_t>(j, "seed", what).value_or(0);
  if (j.contains("outputs")) {
    const json& o = j.at("outputs");
    require_object(o, "outputs");
    allow_keys(o, "outputs", {"report", "curves"});
    if (auto r = get_optional<std::string>(o, "report", "outputs")) c.report_path = resolve(*r);
    if (auto r = get_optional<std::string>(o, "curves", "outputs")) c.curves_path = resolve(*r);
  }
  if (j.contains("checks")) {
    if (!j.at("checks").is_array()) fail("config: 'checks' must be an array");
    for (const auto& k : j.at("checks")) c.checks.push_back(parse_check(k));
  }
  c.adaptive = get_optional<bool>(j, "adaptive_regret", what).value_or(false);
  return c;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(path.string() + ": " + e.what());
  }
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  return experiment_from_json(read_json_file(path), path.parent_path());
}

}  // namespace synthreg
