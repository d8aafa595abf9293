#pragma once

#include "synthreg/panel.hpp"
#include "synthreg/simplex.hpp"
#include "synthreg/strategies.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace synthreg {

/// Per-period record of one pass of a strategy through a panel.
struct Trajectory {
  Eigen::VectorXd predictions;
  Eigen::VectorXd losses;
  std::vector<Weights> weights;
  std::string strategy;
  std::string panel_hash;
  LossKind loss = LossKind::squared;

  Index periods() const noexcept { return predictions.size(); }
  double total_loss() const { return losses.sum(); }
};

/// Unscaled loss of a prediction: (y - yhat)^2 or |y - yhat|.
double loss_value(LossKind loss, double target, double prediction) noexcept;

/// Plays the game: for each period S, predict from data before S (plus the
/// current controls), record the loss against y0_S, then reveal period S.
Trajectory run_protocol(Strategy& strategy, const Panel& panel, LossKind loss = LossKind::squared);
Trajectory run_protocol(const StrategyConfig& config, const Panel& panel);

/// Comparator classes for regret.
///   simplex:    theta'y_t
///   affine:     theta_0 + theta'y_t with theta_0 in [-2, 2]
///   twfe:       weighted TWFE forecasts (simplex match on historical_diff data)
///   first_diff: y0_{t-1} + theta'(y_t - y_{t-1}) (simplex match on first_diff data)
enum class ComparatorClass { simplex, affine, twfe, first_diff };

std::string_view to_string(ComparatorClass c) noexcept;
std::optional<ComparatorClass> parse_comparator(std::string_view name) noexcept;

/// Comparator class a strategy is measured against by default.
ComparatorClass default_comparator(StrategyKind kind) noexcept;

struct OracleResult {
  Weights weights;
  double total_loss = 0.0;
  Eigen::VectorXd losses;  // per period, unscaled
  ComparatorClass comparator = ComparatorClass::simplex;
};

/// Best fixed comparator in hindsight over the whole panel.
OracleResult oracle_fixed_weights(const Panel& panel, ComparatorClass comparator,
                                  LossKind loss = LossKind::squared);

struct RegretReport {
  std::string strategy;
  std::string panel_hash;
  Index units = 0;
  Index periods = 0;
  double total_loss = 0.0;
  double regret = 0.0;
  Weights oracle_weights;
  double oracle_loss = 0.0;
  double avg_regret = 0.0;
  std::optional<double> bound;
  double risk = 0.0;
  std::optional<double> weighted_regret;
  std::optional<double> adaptive_regret;
  std::optional<Index> adaptive_stride;
  std::optional<std::uint64_t> seed;
};

/// regret = sum of losses - oracle loss. `pi` defaults to uniform for risk.
RegretReport compute_regret(const Trajectory& traj, const OracleResult& oracle,
                            const std::optional<Eigen::VectorXd>& pi = std::nullopt);

/// T * (sum pi_t l_t(theta_t) - min_theta sum pi_t l_t(theta)) for squared
/// loss against the simplex class on levels.
double weighted_regret(const Trajectory& traj, const Panel& panel, const Eigen::Ref<const Eigen::VectorXd>& pi);

struct AdaptiveRegret {
  double value = 0.0;
  /// 1 when every interval was scanned.
  Index stride = 1;
};

inline constexpr Index kAdaptiveExactLimit = 256;

/// max over intervals [r, s] of the trajectory loss minus the best fixed
/// comparator's loss on that interval (squared loss, given comparator class).
AdaptiveRegret adaptive_regret(const Trajectory& traj, const Panel& panel,
                               ComparatorClass comparator = ComparatorClass::simplex);

// ---------------------------------------------------------------------------
// Regret bounds (natural logs).

enum class BoundKind {
  theorem1,        // 16 N (ln(sqrt(N) T) + 1)
  corollary1,      // 16 C^3 N (ln(sqrt(N) T / C^2) + 1)
  hazan,           // (2 n b^2 / a) (ln(D R a T / b) + 1)
  theorem2,        // hazan with n = N, R = sqrt(N), a = 1, b = 4, D = 2
  static_did,      // 64 N (ln(sqrt(5)/2 sqrt(N+1) T) + 1)
  first_diff,      // 2 * hazan with n = N, R = 2 sqrt(N), a = 1, b = 4, D = 2
  ftrl_quadratic,  // 2 sqrt(2 K N T)
  ftrl_ridge,      // 2 sqrt(N T)
  ftrl_entropy,    // 3 sqrt(T ln N)
};

std::string_view to_string(BoundKind kind) noexcept;
std::optional<BoundKind> parse_bound_kind(std::string_view name) noexcept;

struct BoundParams {
  double C = 1.0;
  double K = 0.5;
  double n = 0.0;  // 0 means N
  double R = 0.0;  // 0 means sqrt(N)
  double a = 1.0;
  double b = 4.0;
  double D = 2.0;
};

double theoretical_bound(BoundKind kind, Index units, Index horizon, const BoundParams& params = {});

/// Bound on the unscaled regret of a strategy against its default comparator,
/// or nullopt when no guarantee applies. The FTRL theorems are stated for the
/// 1/2-scaled squared loss, so squared-loss FTRL bounds are doubled here.
std::optional<double> strategy_bound(const StrategyConfig& config, Index units, Index horizon,
                                     std::optional<double> timing_c = std::nullopt);

// ---------------------------------------------------------------------------

struct ExpectedLossCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};

/// E_pi loss <= C (oracle average loss + regret / T). Throws when some
/// pi_t > C / T.
ExpectedLossCheck expected_loss_bound_check(const Trajectory& traj, const Eigen::Ref<const Eigen::VectorXd>& pi,
                                            double C, const OracleResult& oracle);

// ---------------------------------------------------------------------------
// Serialization.

nlohmann::json to_json(const RegretReport& report);
RegretReport regret_report_from_json(const nlohmann::json& j);

/// CSV with columns t,strategy_cumloss,oracle_cumloss.
void write_regret_curve(std::ostream& out, const Trajectory& traj, const OracleResult& oracle);

}  // namespace synthreg
