#include "synthreg/protocol.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <ostream>

namespace synthreg {

namespace {

constexpr std::array<std::pair<ComparatorClass, std::string_view>, 4> kComparatorNames{{
    {ComparatorClass::simplex, "simplex"},
    {ComparatorClass::affine, "affine"},
    {ComparatorClass::twfe, "twfe"},
    {ComparatorClass::first_diff, "first_diff"},
}};

constexpr std::array<std::pair<BoundKind, std::string_view>, 9> kBoundNames{{
    {BoundKind::theorem1, "theorem1"},
    {BoundKind::corollary1, "corollary1"},
    {BoundKind::hazan, "hazan"},
    {BoundKind::theorem2, "theorem2"},
    {BoundKind::static_did, "static_did"},
    {BoundKind::first_diff, "first_diff"},
    {BoundKind::ftrl_quadratic, "ftrl_quadratic"},
    {BoundKind::ftrl_ridge, "ftrl_ridge"},
    {BoundKind::ftrl_entropy, "ftrl_entropy"},
}};

// Data on which a comparator class is a plain (or affine) simplex match.
TransformedPanel comparator_data(const Panel& panel, ComparatorClass c) {
  switch (c) {
    case ComparatorClass::twfe:
      return historical_diff(panel);
    case ComparatorClass::first_diff:
      // With one period the first-difference transform is just the level.
      return panel.periods() < 2 ? levels(panel) : first_diff(panel);
    default:
      return levels(panel);
  }
}

std::vector<LeastSquaresStats> prefix_stats(const Panel& values, bool affine) {
  const Index n = values.units();
  const Index T = values.periods();
  std::vector<LeastSquaresStats> prefix;
  prefix.reserve(static_cast<std::size_t>(T + 1));
  LeastSquaresStats running(affine ? n + 1 : n);
  prefix.push_back(running);
  Eigen::VectorXd row(affine ? n + 1 : n);
  for (Index t = 0; t < T; ++t) {
    if (affine) {
      row[0] = 1.0;
      row.tail(n) = values.controls.col(t);
    } else {
      row = values.controls.col(t);
    }
    running.add(values.treated[t], row);
    prefix.push_back(running);
  }
  return prefix;
}

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw Error(ErrorKind::invalid_input, std::string(what) + " must be positive");
}

}  // namespace

double loss_value(LossKind loss, double target, double prediction) noexcept {
  const double r = target - prediction;
  return loss == LossKind::squared ? r * r : std::abs(r);
}

Trajectory run_protocol(Strategy& strategy, const Panel& panel, LossKind loss) {
  if (strategy.units() != panel.units()) {
    throw Error(ErrorKind::dimension_mismatch, "strategy has " + std::to_string(strategy.units()) +
                                                   " controls, panel has " + std::to_string(panel.units()));
  }
  const Index T = panel.periods();
  Trajectory traj;
  traj.predictions.resize(T);
  traj.losses.resize(T);
  traj.weights.reserve(static_cast<std::size_t>(T));
  traj.strategy = std::string(to_string(strategy.kind()));
  traj.panel_hash = panel_hash(panel);
  traj.loss = loss;
  for (Index t = 0; t < T; ++t) {
    try {
      Prediction p = strategy.predict(panel.controls.col(t));
      traj.predictions[t] = p.value;
      traj.losses[t] = loss_value(loss, panel.treated[t], p.value);
      traj.weights.push_back(std::move(p.weights));
      strategy.update(panel.treated[t], panel.controls.col(t));
    } catch (const ConvergenceError& e) {
      throw ConvergenceError("period " + std::to_string(t + 1) + ": " + e.message(), e.last_iterate(),
                             e.kkt_residual());
    } catch (const Error& e) {
      throw Error(e.kind(), "period " + std::to_string(t + 1) + ": " + e.message());
    }
  }
  return traj;
}

Trajectory run_protocol(const StrategyConfig& config, const Panel& panel) {
  auto strategy = make_strategy(config, panel.units(), panel.periods());
  Trajectory traj =
      run_protocol(*strategy, panel, config.kind == StrategyKind::ftrl ? config.loss : LossKind::squared);
  traj.strategy = config.name();
  return traj;
}

std::string_view to_string(ComparatorClass c) noexcept {
  for (const auto& [k, name] : kComparatorNames) {
    if (k == c) return name;
  }
  return "unknown";
}

std::optional<ComparatorClass> parse_comparator(std::string_view name) noexcept {
  for (const auto& [k, n] : kComparatorNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

ComparatorClass default_comparator(StrategyKind kind) noexcept {
  switch (kind) {
    case StrategyKind::demeaned_sc:
      return ComparatorClass::affine;
    case StrategyKind::differenced_sc:
    case StrategyKind::uniform_did:
    case StrategyKind::twfe_fixed_w:
      return ComparatorClass::twfe;
    case StrategyKind::first_diff_sc:
      return ComparatorClass::first_diff;
    default:
      return ComparatorClass::simplex;
  }
}

OracleResult oracle_fixed_weights(const Panel& panel, ComparatorClass comparator, LossKind loss) {
  validate(panel);
  const TransformedPanel data = comparator_data(panel, comparator);
  const Panel& v = data.values;
  OracleResult out;
  out.comparator = comparator;
  if (comparator == ComparatorClass::affine) {
    if (loss != LossKind::squared) throw Error(ErrorKind::invalid_input, "affine oracle supports squared loss only");
    out.weights = solve_affine_ls(prefix_stats(v, true).back()).weights;
  } else if (loss == LossKind::squared) {
    out.weights = solve_simplex_ls(prefix_stats(v, false).back()).weights;
  } else {
    out.weights =
        solve_simplex_absolute(v.treated, v.controls, Eigen::VectorXd::Ones(v.periods())).weights;
  }
  out.losses.resize(v.periods());
  for (Index t = 0; t < v.periods(); ++t) {
    out.losses[t] = loss_value(loss, v.treated[t], out.weights.predict(v.controls.col(t)));
  }
  out.total_loss = out.losses.sum();
  return out;
}

RegretReport compute_regret(const Trajectory& traj, const OracleResult& oracle,
                            const std::optional<Eigen::VectorXd>& pi) {
  if (traj.losses.size() != oracle.losses.size()) {
    throw Error(ErrorKind::dimension_mismatch, "trajectory and oracle cover different horizons");
  }
  const Index T = traj.periods();
  RegretReport r;
  r.strategy = traj.strategy;
  r.panel_hash = traj.panel_hash;
  r.periods = T;
  r.units = traj.weights.empty() ? 0 : traj.weights.front().theta.size();
  r.total_loss = traj.total_loss();
  r.oracle_loss = oracle.total_loss;
  r.oracle_weights = oracle.weights;
  r.regret = r.total_loss - r.oracle_loss;
  r.avg_regret = T > 0 ? r.regret / static_cast<double>(T) : 0.0;
  if (pi) {
    if (pi->size() != T) throw Error(ErrorKind::dimension_mismatch, "timing distribution length differs from T");
    r.risk = pi->dot(traj.losses);
  } else {
    r.risk = T > 0 ? r.total_loss / static_cast<double>(T) : 0.0;
  }
  return r;
}

double weighted_regret(const Trajectory& traj, const Panel& panel, const Eigen::Ref<const Eigen::VectorXd>& pi) {
  const Index T = panel.periods();
  if (pi.size() != T || traj.periods() != T) {
    throw Error(ErrorKind::dimension_mismatch, "weighted regret needs pi, trajectory and panel of equal length");
  }
  if ((pi.array() < 0.0).any()) throw Error(ErrorKind::invalid_input, "timing weights must be nonnegative");
  LeastSquaresStats stats(panel.units());
  for (Index t = 0; t < T; ++t) stats.add(panel.treated[t], panel.controls.col(t), pi[t]);
  const Weights best = solve_simplex_ls(stats).weights;
  double oracle = 0.0;
  for (Index t = 0; t < T; ++t) {
    const double r = panel.treated[t] - best.predict(panel.controls.col(t));
    oracle += pi[t] * r * r;
  }
  return static_cast<double>(T) * (pi.dot(traj.losses) - oracle);
}

AdaptiveRegret adaptive_regret(const Trajectory& traj, const Panel& panel, ComparatorClass comparator) {
  const Index T = panel.periods();
  if (traj.periods() != T) throw Error(ErrorKind::dimension_mismatch, "trajectory and panel differ in length");
  if (traj.loss != LossKind::squared) throw Error(ErrorKind::invalid_input, "adaptive regret uses squared loss");
  if (T == 0) return {};
  const bool affine = comparator == ComparatorClass::affine;
  const TransformedPanel data = comparator_data(panel, comparator);
  const std::vector<LeastSquaresStats> prefix = prefix_stats(data.values, affine);

  Eigen::VectorXd cumulative(T + 1);
  cumulative[0] = 0.0;
  for (Index t = 0; t < T; ++t) cumulative[t + 1] = cumulative[t] + traj.losses[t];

  AdaptiveRegret out;
  out.stride = T <= kAdaptiveExactLimit ? 1 : (T + kAdaptiveExactLimit - 1) / kAdaptiveExactLimit;
  std::vector<Index> ends;
  for (Index s = out.stride - 1; s < T; s += out.stride) ends.push_back(s);
  if (ends.empty() || ends.back() != T - 1) ends.push_back(T - 1);

  out.value = -std::numeric_limits<double>::infinity();
  for (Index r = 0; r < T; r += out.stride) {
    std::optional<Weights> warm;
    for (Index s : ends) {
      if (s < r) continue;
      LeastSquaresStats interval = prefix[static_cast<std::size_t>(s + 1)];
      interval.merge(prefix[static_cast<std::size_t>(r)], -1.0);
      SolveOptions opt;
      opt.warm_start = warm;
      const Solution sol = affine ? solve_affine_ls(interval, opt) : solve_simplex_ls(interval, opt);
      Eigen::VectorXd point = sol.weights.theta;
      if (affine) {
        point.resize(sol.weights.theta.size() + 1);
        point[0] = *sol.weights.intercept;
        point.tail(sol.weights.theta.size()) = sol.weights.theta;
      }
      const double regret = cumulative[s + 1] - cumulative[r] - interval.value(point);
      out.value = std::max(out.value, regret);
      warm = sol.weights;
    }
  }
  return out;
}

std::string_view to_string(BoundKind kind) noexcept {
  for (const auto& [k, name] : kBoundNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::optional<BoundKind> parse_bound_kind(std::string_view name) noexcept {
  for (const auto& [k, n] : kBoundNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

double theoretical_bound(BoundKind kind, Index units, Index horizon, const BoundParams& p) {
  if (units < 1 || horizon < 1) throw Error(ErrorKind::invalid_input, "N and T must be positive");
  const double N = static_cast<double>(units);
  const double T = static_cast<double>(horizon);
  auto hazan = [&](double n, double R, double a, double b, double D) {
    require_positive(n, "n");
    require_positive(R, "R");
    require_positive(a, "a");
    require_positive(b, "b");
    require_positive(D, "D");
    return (2.0 * n * b * b / a) * (std::log(D * R * a * T / b) + 1.0);
  };
  switch (kind) {
    case BoundKind::theorem1:
      return 16.0 * N * (std::log(std::sqrt(N) * T) + 1.0);
    case BoundKind::corollary1:
      if (!(p.C >= 1.0)) throw Error(ErrorKind::invalid_input, "C must be at least 1");
      return 16.0 * p.C * p.C * p.C * N * (std::log(std::sqrt(N) * T / (p.C * p.C)) + 1.0);
    case BoundKind::hazan:
      return hazan(p.n > 0.0 ? p.n : N, p.R > 0.0 ? p.R : std::sqrt(N), p.a, p.b, p.D);
    case BoundKind::theorem2:
      return hazan(N, std::sqrt(N), 1.0, 4.0, 2.0);
    case BoundKind::static_did:
      return 64.0 * N * (std::log(std::sqrt(5.0) / 2.0 * std::sqrt(N + 1.0) * T) + 1.0);
    case BoundKind::first_diff:
      return 2.0 * hazan(N, 2.0 * std::sqrt(N), 1.0, 4.0, 2.0);
    case BoundKind::ftrl_quadratic:
      if (!(p.K >= 0.0)) throw Error(ErrorKind::invalid_input, "K must be nonnegative");
      return 2.0 * std::sqrt(2.0 * p.K * N * T);
    case BoundKind::ftrl_ridge:
      return 2.0 * std::sqrt(N * T);
    case BoundKind::ftrl_entropy:
      return 3.0 * std::sqrt(T * std::log(N));
  }
  throw Error(ErrorKind::invalid_input, "unknown bound kind");
}

std::optional<double> strategy_bound(const StrategyConfig& config, Index units, Index horizon,
                                     std::optional<double> timing_c) {
  switch (config.kind) {
    case StrategyKind::ftl:
      return theoretical_bound(BoundKind::theorem1, units, horizon);
    case StrategyKind::weighted_ftl:
      if (!timing_c) return std::nullopt;
      return theoretical_bound(BoundKind::corollary1, units, horizon, BoundParams{.C = *timing_c});
    case StrategyKind::differenced_sc:
      return theoretical_bound(BoundKind::theorem2, units, horizon);
    case StrategyKind::demeaned_sc:
      return theoretical_bound(BoundKind::static_did, units, horizon);
    case StrategyKind::first_diff_sc:
      return theoretical_bound(BoundKind::first_diff, units, horizon);
    case StrategyKind::ftrl: {
      const PenaltySpec p = resolve_penalty(config, units, horizon);
      if (p.kind == PenaltyKind::none) return std::nullopt;
      // K / eta + eta T G / 2 with G = 4 sup |y|_*^2 in the penalty's norm.
      const double N = static_cast<double>(units);
      double K = 0.5;
      double G = 4.0 * N;
      if (p.kind == PenaltyKind::entropy) {
        K = std::log(N);
        G = 4.0;
      } else if (p.kind == PenaltyKind::quadratic) {
        K = penalty_range(p, units);
      }
      const double bound = K / p.eta + p.eta * static_cast<double>(horizon) * G / 2.0;
      return config.loss == LossKind::squared ? 2.0 * bound : bound;
    }
    default:
      return std::nullopt;
  }
}

ExpectedLossCheck expected_loss_bound_check(const Trajectory& traj, const Eigen::Ref<const Eigen::VectorXd>& pi,
                                            double C, const OracleResult& oracle) {
  const Index T = traj.periods();
  if (pi.size() != T || oracle.losses.size() != T) {
    throw Error(ErrorKind::dimension_mismatch, "pi, trajectory and oracle must share the horizon");
  }
  if (!(C >= 1.0)) throw Error(ErrorKind::invalid_input, "C must be at least 1");
  const double cap = C / static_cast<double>(T) + 1e-12;
  for (Index t = 0; t < T; ++t) {
    if (!(pi[t] >= 0.0) || pi[t] > cap) {
      throw Error(ErrorKind::invalid_input, "pi_t at t=" + std::to_string(t + 1) + " is " + format_double(pi[t]) +
                                                ", outside [0, C/T]");
    }
  }
  ExpectedLossCheck out;
  out.lhs = pi.dot(traj.losses);
  const double avg_oracle = oracle.total_loss / static_cast<double>(T);
  const double regret = traj.total_loss() - oracle.total_loss;
  out.rhs = C * (avg_oracle + regret / static_cast<double>(T));
  out.holds = out.lhs <= out.rhs + 1e-9;
  return out;
}

nlohmann::json to_json(const RegretReport& r) {
  auto optional = [](const auto& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json weights{{"theta", std::vector<double>(r.oracle_weights.theta.data(),
                                                       r.oracle_weights.theta.data() + r.oracle_weights.theta.size())}};
  weights["intercept"] = optional(r.oracle_weights.intercept);
  return {
      {"strategy", r.strategy},
      {"panel_hash", r.panel_hash},
      {"units", r.units},
      {"periods", r.periods},
      {"seed", optional(r.seed)},
      {"total_loss", r.total_loss},
      {"regret", r.regret},
      {"oracle_loss", r.oracle_loss},
      {"oracle_weights", weights},
      {"avg_regret", r.avg_regret},
      {"bound", optional(r.bound)},
      {"risk", r.risk},
      {"weighted_regret", optional(r.weighted_regret)},
      {"adaptive_regret", optional(r.adaptive_regret)},
      {"adaptive_stride", optional(r.adaptive_stride)},
  };
}

RegretReport regret_report_from_json(const nlohmann::json& j) {
  auto optional_double = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
  };
  try {
    RegretReport r;
    r.strategy = j.at("strategy").get<std::string>();
    r.panel_hash = j.value("panel_hash", std::string{});
    r.units = j.value("units", Index{0});
    r.periods = j.value("periods", Index{0});
    if (j.contains("seed") && !j.at("seed").is_null()) r.seed = j.at("seed").get<std::uint64_t>();
    r.total_loss = j.value("total_loss", 0.0);
    r.regret = j.at("regret").get<double>();
    r.oracle_loss = j.at("oracle_loss").get<double>();
    if (j.contains("oracle_weights")) {
      const auto theta = j.at("oracle_weights").at("theta").get<std::vector<double>>();
      r.oracle_weights.theta = Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<Index>(theta.size()));
      const auto& icpt = j.at("oracle_weights").value("intercept", nlohmann::json(nullptr));
      if (!icpt.is_null()) r.oracle_weights.intercept = icpt.get<double>();
    }
    r.avg_regret = j.at("avg_regret").get<double>();
    r.bound = optional_double("bound");
    r.risk = j.at("risk").get<double>();
    r.weighted_regret = optional_double("weighted_regret");
    r.adaptive_regret = optional_double("adaptive_regret");
    if (j.contains("adaptive_stride") && !j.at("adaptive_stride").is_null()) {
      r.adaptive_stride = j.at("adaptive_stride").get<Index>();
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, std::string("regret report: ") + e.what());
  }
}

void write_regret_curve(std::ostream& out, const Trajectory& traj, const OracleResult& oracle) {
  if (traj.losses.size() != oracle.losses.size()) {
    throw Error(ErrorKind::dimension_mismatch, "trajectory and oracle cover different horizons");
  }
  out << "t,strategy_cumloss,oracle_cumloss\n";
  double strategy = 0.0;
  double best = 0.0;
  for (Index t = 0; t < traj.periods(); ++t) {
    strategy += traj.losses[t];
    best += oracle.losses[t];
    out << (t + 1) << ',' << format_double(strategy) << ',' << format_double(best) << '\n';
  }
}

}  // namespace synthreg
