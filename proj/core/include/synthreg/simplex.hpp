#pragma once

#include "synthreg/error.hpp"
#include "synthreg/panel.hpp"

#include <Eigen/Dense>

#include <optional>
#include <utility>

namespace synthreg {

/// A point of the simplex, optionally paired with a bounded intercept.
struct Weights {
  Eigen::VectorXd theta;
  std::optional<double> intercept;

  static Weights uniform(Index n);

  /// theta'y (+ intercept).
  double predict(const Eigen::Ref<const Eigen::VectorXd>& y) const;
};

inline constexpr double kInterceptBound = 2.0;

bool is_feasible(const Weights& w, double tol = 1e-9);
void validate(const Weights& w);

/// Euclidean projection onto {theta >= 0, sum theta = 1} by the sort-based
/// threshold rule.
Weights project_simplex(const Eigen::Ref<const Eigen::VectorXd>& v);

enum class PenaltyKind { none, ridge, entropy, quadratic };
enum class LossKind { squared, absolute };

std::string_view to_string(PenaltyKind kind) noexcept;
std::string_view to_string(LossKind kind) noexcept;

/// Regularizer Phi scaled by 1/eta in the FTRL objective.
///   ridge:     Phi = 1/2 |theta|^2
///   entropy:   Phi = sum theta_i log theta_i + log N   (0 log 0 = 0)
///   quadratic: Phi = 1/2 (x - X theta)' H (x - X theta)
struct PenaltySpec {
  PenaltyKind kind = PenaltyKind::none;
  double eta = 1.0;
  Eigen::MatrixXd H;
  Eigen::MatrixXd X;
  Eigen::VectorXd x;
};

/// Throws ErrorKind::invalid_penalty on eta <= 0, a non-PSD H, non-conformable
/// matrices, or a singular X'HX.
void validate(const PenaltySpec& p, Index units);

/// Rescales H so that the smallest eigenvalue of X'HX is exactly 1.
PenaltySpec normalize_quadratic(PenaltySpec p);

double penalty_value(const PenaltySpec& p, const Eigen::Ref<const Eigen::VectorXd>& theta);

/// K = sup Phi - inf Phi over the simplex.
double penalty_range(const PenaltySpec& p, Index units);

std::pair<double, double> penalty_value_and_range(const PenaltySpec& p,
                                                  const Eigen::Ref<const Eigen::VectorXd>& theta);

/// Sufficient statistics of sum_s w_s (y0_s - theta'y_s)^2.
class LeastSquaresStats {
 public:
  explicit LeastSquaresStats(Index dim = 0);

  void add(double target, const Eigen::Ref<const Eigen::VectorXd>& regressors, double weight = 1.0);
  void merge(const LeastSquaresStats& other, double sign = 1.0);

  Index dim() const noexcept { return gram_.rows(); }
  Index count() const noexcept { return count_; }
  double total_weight() const noexcept { return total_weight_; }
  const Eigen::MatrixXd& gram() const noexcept { return gram_; }
  const Eigen::VectorXd& cross() const noexcept { return cross_; }
  double target_ss() const noexcept { return target_ss_; }

  /// theta'G theta - 2 b'theta + c, clamped at zero.
  double value(const Eigen::Ref<const Eigen::VectorXd>& theta) const;

 private:
  Eigen::MatrixXd gram_;
  Eigen::VectorXd cross_;
  double target_ss_ = 0.0;
  double total_weight_ = 0.0;
  Index count_ = 0;
};

inline constexpr double kTieEpsilon = 1e-10;
inline constexpr double kDefaultTolerance = 1e-10;
inline constexpr double kAbsoluteLossTolerance = 1e-6;

struct SolveOptions {
  std::optional<PenaltySpec> penalty;
  /// Multiplies the data term; FTRL with squared loss uses 1/2.
  double loss_scale = 1.0;
  double tolerance = kDefaultTolerance;
  /// 0 selects the default cap.
  int max_iters = 0;
  std::optional<Weights> warm_start;
};

/// Full data description of a constrained least-squares or FTRL solve.
struct SolveSpec {
  Eigen::VectorXd targets;      // length S
  Eigen::MatrixXd regressors;   // N x S
  std::optional<Eigen::VectorXd> sample_weights;
  std::optional<PenaltySpec> penalty;
  LossKind loss = LossKind::squared;
  double loss_scale = 1.0;
  double tolerance = kDefaultTolerance;
  int max_iters = 0;
  std::optional<Weights> warm_start;
};

struct Solution {
  Weights weights;
  /// Objective at `weights` excluding the tie-break term.
  double objective = 0.0;
  /// Infinity norm of theta - P(theta - grad / L), the scaled projected gradient.
  double kkt_residual = 0.0;
  int iterations = 0;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& message, Weights last_iterate, double kkt_residual);

  const Weights& last_iterate() const noexcept { return last_iterate_; }
  double kkt_residual() const noexcept { return kkt_residual_; }

 private:
  Weights last_iterate_;
  double kkt_residual_;
};

/// argmin over the simplex of scale * sum w (y0 - theta'y)^2 + Phi(theta)/eta,
/// with a eps_tie * scale * sum(w) * |theta|^2 tie-break. Empty history with no
/// penalty returns uniform weights.
Solution solve_simplex_ls(const LeastSquaresStats& stats, const SolveOptions& options = {});

/// Same over [-2, 2] x simplex. `augmented` carries regressors [1; y]; the
/// intercept is coordinate 0 and is excluded from the tie-break.
Solution solve_affine_ls(const LeastSquaresStats& augmented, const SolveOptions& options = {});

/// Absolute-loss FTRL objective scale * sum w |y0 - theta'y| + Phi/eta, solved
/// through pseudo-Huber smoothing; accurate to about 1e-6.
Solution solve_simplex_absolute(const Eigen::Ref<const Eigen::VectorXd>& targets,
                                const Eigen::Ref<const Eigen::MatrixXd>& regressors,
                                const Eigen::Ref<const Eigen::VectorXd>& sample_weights,
                                const SolveOptions& options = {});

Solution solve_constrained_ls(const SolveSpec& spec);
Solution solve_affine_ls(const SolveSpec& spec);

/// Objective of `spec` at `w` (no tie-break term).
double objective_value(const SolveSpec& spec, const Weights& w);

/// Regularization strengths that attain the FTRL regret bounds at horizon T.
double default_eta(PenaltyKind kind, Index units, Index horizon, double range_k = 0.5);

}  // namespace synthreg
