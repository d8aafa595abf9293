#pragma once

#include "synthreg/panel.hpp"
#include "synthreg/simplex.hpp"

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace synthreg {

enum class StrategyKind {
  ftl,
  weighted_ftl,
  ftrl,
  differenced_sc,
  demeaned_sc,
  first_diff_sc,
  fixed_weights,
  uniform_did,
  twfe_fixed_w,
  flh,
};

std::string_view to_string(StrategyKind kind) noexcept;
std::optional<StrategyKind> parse_strategy_kind(std::string_view name) noexcept;

/// Declarative description of a strategy.
struct StrategyConfig {
  StrategyKind kind = StrategyKind::ftl;
  /// Optional display name; defaults to the kind.
  std::string label;

  /// fixed_weights theta / twfe_fixed_w w.
  std::optional<Eigen::VectorXd> weights;

  /// ftrl: penalty kind and matrices; `eta` unset selects default_eta(N, T).
  PenaltyKind penalty = PenaltyKind::ridge;
  std::optional<double> eta;
  Eigen::MatrixXd H;
  Eigen::MatrixXd X;
  Eigen::VectorXd x;
  LossKind loss = LossKind::squared;

  /// weighted_ftl sample weights pi_t, one per period.
  std::optional<Eigen::VectorXd> timing;

  /// flh base strategy (FTL when unset) and learning rate.
  std::shared_ptr<const StrategyConfig> base;
  double alpha = 0.25;

  std::string name() const { return label.empty() ? std::string(to_string(kind)) : label; }
};

/// Weights emitted for the current period and the implied level prediction.
struct Prediction {
  Weights weights;
  double value = 0.0;
};

/// Online predictor driven by the protocol: predict(y_t) for period t, then
/// update(y0_t, y_t). Predictions depend only on periods already observed.
class Strategy {
 public:
  explicit Strategy(Index units) : units_(units) {}
  virtual ~Strategy() = default;

  Strategy(const Strategy&) = default;
  Strategy& operator=(const Strategy&) = default;

  virtual StrategyKind kind() const noexcept = 0;
  virtual std::unique_ptr<Strategy> clone() const = 0;

  Prediction predict(const Eigen::Ref<const Eigen::VectorXd>& controls);
  void update(double treated, const Eigen::Ref<const Eigen::VectorXd>& controls);

  Index units() const noexcept { return units_; }
  /// Number of periods observed so far (the 0-based index of the next period).
  Index observed() const noexcept { return observed_; }

 protected:
  virtual Prediction do_predict(const Eigen::VectorXd& controls) = 0;
  virtual void do_update(double treated, const Eigen::VectorXd& controls) = 0;

 private:
  void check(const Eigen::Ref<const Eigen::VectorXd>& controls) const;

  Index units_;
  Index observed_ = 0;
};

/// Builds a strategy for a panel with `units` controls and horizon `horizon`
/// (used for default eta and to size weighted_ftl timing).
std::unique_ptr<Strategy> make_strategy(const StrategyConfig& config, Index units, Index horizon);

/// Throws on configurations that cannot run on an (N, T) panel.
void validate(const StrategyConfig& config, Index units, Index horizon);

/// Penalty spec of an ftrl config, with eta resolved and H normalized.
PenaltySpec resolve_penalty(const StrategyConfig& config, Index units, Index horizon);

/// Loss-function scale used inside FTRL objectives: squared loss is
/// 1/2 (y - yhat)^2, absolute loss |y - yhat|.
double ftrl_loss_scale(LossKind loss) noexcept;

// ---------------------------------------------------------------------------
// Weighted two-way fixed effects.

/// Forecast mu_0 + alpha_S of the weighted TWFE regression from S - 1 past
/// periods (`past_treated`, `past_controls` N x (S-1)) and current controls.
/// For S = 1 (no past) returns w'y_1.
double twfe_predict(const Eigen::Ref<const Eigen::VectorXd>& past_treated,
                    const Eigen::Ref<const Eigen::MatrixXd>& past_controls,
                    const Eigen::Ref<const Eigen::VectorXd>& current_controls, const Weights& w);

/// The same forecast obtained by solving the fixed-effects regression directly
/// through its normal equations.
double twfe_predict_regression(const Eigen::Ref<const Eigen::VectorXd>& past_treated,
                               const Eigen::Ref<const Eigen::MatrixXd>& past_controls,
                               const Eigen::Ref<const Eigen::VectorXd>& current_controls, const Weights& w);

// ---------------------------------------------------------------------------
// Follow The Leading History.

/// Expert probabilities in log space. Expert j is born at period j.
class FlhWeights {
 public:
  explicit FlhWeights(double alpha = 0.25);

  /// Reweights by exp(-alpha * loss_j) and renormalizes, then adds a newborn
  /// expert with mass 1/(m+1) and scales the others by m/(m+1), m being the
  /// number of experts before the step.
  void step(const Eigen::Ref<const Eigen::VectorXd>& losses);

  Eigen::VectorXd probs() const;
  Index size() const noexcept { return log_probs_.size(); }
  double alpha() const noexcept { return alpha_; }

 private:
  double alpha_;
  Eigen::VectorXd log_probs_;
};

/// Expert probabilities of an flh strategy; throws for other kinds.
const FlhWeights& flh_weights(const Strategy& s);

// ---------------------------------------------------------------------------
// Lower-bound construction against fixed strategies.

/// Panel on which the fixed weights `theta` lose at least eps per period while
/// a vertex of the simplex is perfect. Requires N >= 2 and 0 < eps < 1e-4.
Panel fixed_adversary_response(const Weights& theta, double eps, Index horizon);

}  // namespace synthreg
