#include "synthreg/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace synthreg {

namespace {

constexpr double kFeasibilitySlack = 1e-12;
constexpr double kEntropyFloor = 1e-12;

// ---------------------------------------------------------------------------
// Box + simplex QP by a primal active-set method.
//
// Variables [0, box_count) live in [lo, hi]; the remaining ones are
// nonnegative and sum to one.
// ---------------------------------------------------------------------------

struct QpProblem {
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  Index box_count = 0;
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
};

enum class Fixed : signed char { none, lower, upper };

struct QpResult {
  Eigen::VectorXd x;
  int iterations = 0;
  bool converged = false;
};

Eigen::VectorXd project_feasible(Index box_count, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                                 const Eigen::VectorXd& x) {
  Eigen::VectorXd out = x;
  for (Index i = 0; i < box_count; ++i) out[i] = std::clamp(x[i], lo[i], hi[i]);
  const Index n = x.size();
  if (n > box_count) out.tail(n - box_count) = project_simplex(x.tail(n - box_count)).theta;
  return out;
}

// Gradient-mapping residual |x - P(x - g / L)|_inf.
double kkt_residual(Index box_count, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                    const Eigen::VectorXd& x, const Eigen::VectorXd& g, double lipschitz) {
  const double L = std::max(lipschitz, 1e-300);
  const Eigen::VectorXd stepped = x - g / L;
  return (x - project_feasible(box_count, lo, hi, stepped)).cwiseAbs().maxCoeff();
}

// Upper bound on the largest eigenvalue of a symmetric matrix.
double lipschitz_bound(const Eigen::MatrixXd& P) {
  if (P.size() == 0) return 1.0;
  return std::max(P.cwiseAbs().rowwise().sum().maxCoeff(), 1e-300);
}

Eigen::VectorXd solve_kkt(const Eigen::MatrixXd& K, const Eigen::VectorXd& rhs) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);
  Eigen::VectorXd sol = lu.solve(rhs);
  if (!sol.allFinite()) {
    return K.completeOrthogonalDecomposition().solve(rhs);
  }
  // One step of iterative refinement.
  const Eigen::VectorXd residual = rhs - K * sol;
  const Eigen::VectorXd correction = lu.solve(residual);
  if (correction.allFinite()) sol += correction;
  return sol;
}

QpResult solve_qp(const QpProblem& qp, const Eigen::VectorXd& start, int max_iters) {
  const Index n = qp.q.size();
  const Index b = qp.box_count;
  QpResult result;
  Eigen::VectorXd x = project_feasible(b, qp.lo, qp.hi, start);

  std::vector<Fixed> fixed(static_cast<std::size_t>(n), Fixed::none);
  for (Index i = 0; i < b; ++i) {
    if (x[i] <= qp.lo[i]) {
      fixed[i] = Fixed::lower;
      x[i] = qp.lo[i];
    } else if (x[i] >= qp.hi[i]) {
      fixed[i] = Fixed::upper;
      x[i] = qp.hi[i];
    }
  }
  for (Index i = b; i < n; ++i) {
    if (x[i] <= 0.0) {
      fixed[i] = Fixed::lower;
      x[i] = 0.0;
    }
  }

  const double scale = 1.0 + qp.P.cwiseAbs().maxCoeff() + qp.q.cwiseAbs().maxCoeff();
  const double multiplier_tol = 1e-12 * scale;

  std::vector<Index> free_idx;
  free_idx.reserve(static_cast<std::size_t>(n));
  for (int iter = 0; iter < max_iters; ++iter) {
    result.iterations = iter + 1;
    free_idx.clear();
    bool simplex_free = false;
    for (Index i = 0; i < n; ++i) {
      if (fixed[i] == Fixed::none) {
        free_idx.push_back(i);
        simplex_free = simplex_free || i >= b;
      }
    }
    const auto m = static_cast<Index>(free_idx.size());
    const Eigen::VectorXd g = qp.P * x + qp.q;

    // Equality-constrained step on the free face.
    const Index k = m + (simplex_free ? 1 : 0);
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(k, k);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k);
    for (Index r = 0; r < m; ++r) {
      for (Index c = 0; c < m; ++c) K(r, c) = qp.P(free_idx[r], free_idx[c]);
      rhs[r] = -g[free_idx[r]];
      if (simplex_free && free_idx[r] >= b) {
        K(r, m) = 1.0;
        K(m, r) = 1.0;
      }
    }
    Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
    double nu = 0.0;
    if (k > 0) {
      const Eigen::VectorXd sol = solve_kkt(K, rhs);
      for (Index r = 0; r < m; ++r) d[free_idx[r]] = sol[r];
      if (simplex_free) nu = -sol[m];
    }

    // Ratio test against the inactive bounds.
    double alpha = 1.0;
    Index blocking = -1;
    Fixed blocking_side = Fixed::none;
    for (Index i : free_idx) {
      if (d[i] < 0.0) {
        const double lower = i < b ? qp.lo[i] : 0.0;
        if (std::isfinite(lower)) {
          const double step = (lower - x[i]) / d[i];
          if (step < alpha) {
            alpha = std::max(step, 0.0);
            blocking = i;
            blocking_side = Fixed::lower;
          }
        }
      } else if (d[i] > 0.0 && i < b && std::isfinite(qp.hi[i])) {
        const double step = (qp.hi[i] - x[i]) / d[i];
        if (step < alpha) {
          alpha = std::max(step, 0.0);
          blocking = i;
          blocking_side = Fixed::upper;
        }
      }
    }
    x += alpha * d;
    if (blocking >= 0) {
      fixed[blocking] = blocking_side;
      x[blocking] = blocking_side == Fixed::lower ? (blocking < b ? qp.lo[blocking] : 0.0) : qp.hi[blocking];
      continue;
    }

    // Full step: x minimizes over the face. Check the multipliers of the fixed bounds.
    const Eigen::VectorXd g_new = qp.P * x + qp.q;
    Index release = -1;
    double most_negative = -multiplier_tol;
    for (Index i = 0; i < n; ++i) {
      if (fixed[i] == Fixed::none) continue;
      const double a = i >= b ? 1.0 : 0.0;
      const double mu = fixed[i] == Fixed::lower ? g_new[i] - nu * a : nu * a - g_new[i];
      if (mu < most_negative) {
        most_negative = mu;
        release = i;
      }
    }
    if (release < 0) {
      result.converged = true;
      break;
    }
    fixed[release] = Fixed::none;
  }

  // Clean rounding noise on the simplex block.
  if (n > b) {
    auto tail = x.tail(n - b);
    tail = tail.cwiseMax(0.0);
    const double sum = tail.sum();
    if (sum > 0.0) tail /= sum;
  }
  result.x = std::move(x);
  return result;
}

// ---------------------------------------------------------------------------
// Objective assembly shared by the quadratic, entropy and absolute-loss paths.
// ---------------------------------------------------------------------------

struct Objective {
  Index box_count = 0;
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  // Quadratic part 1/2 x'Px + q'x + c (data, ridge/quadratic penalty, tie-break).
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  double c = 0.0;
  // Tie-break contribution, tracked so it can be excluded from reported values.
  double tie_coef = 0.0;

  // Entropy penalty coefficient 1/eta (0 when absent).
  double entropy_coef = 0.0;
  double entropy_shift = 0.0;  // log N

  // Smoothed absolute loss: scale * sum w * h_mu(y0 - x'y).
  bool absolute = false;
  Eigen::VectorXd abs_targets;
  Eigen::MatrixXd abs_regressors;  // dim x S (already augmented if needed)
  Eigen::VectorXd abs_weights;
  double abs_scale = 1.0;
  double mu = 0.0;

  Index dim() const { return q.size(); }

  double tie_value(const Eigen::VectorXd& x) const {
    return tie_coef * x.tail(dim() - box_count).squaredNorm();
  }

  double entropy_value(const Eigen::VectorXd& x) const {
    double v = entropy_shift;
    for (Index i = box_count; i < dim(); ++i) {
      if (x[i] > 0.0) v += x[i] * std::log(x[i]);
    }
    return v;
  }

  // Objective minimized by the solver; `smoothed` selects h_mu over |.|.
  double value(const Eigen::VectorXd& x, bool smoothed) const {
    double v = 0.5 * x.dot(P * x) + q.dot(x) + c;
    if (entropy_coef > 0.0) v += entropy_coef * entropy_value(x);
    if (absolute) {
      const Eigen::VectorXd r = abs_targets - abs_regressors.transpose() * x;
      double s = 0.0;
      for (Index t = 0; t < r.size(); ++t) {
        const double h = smoothed ? std::sqrt(r[t] * r[t] + mu * mu) - mu : std::abs(r[t]);
        s += abs_weights[t] * h;
      }
      v += abs_scale * s;
    }
    return v;
  }

  void derivatives(const Eigen::VectorXd& x, Eigen::VectorXd& g, Eigen::MatrixXd& H) const {
    g = P * x + q;
    H = P;
    if (entropy_coef > 0.0) {
      for (Index i = box_count; i < dim(); ++i) {
        const double xi = std::max(x[i], kEntropyFloor);
        g[i] += entropy_coef * (std::log(xi) + 1.0);
        H(i, i) += entropy_coef / xi;
      }
    }
    if (absolute) {
      const Eigen::VectorXd r = abs_targets - abs_regressors.transpose() * x;
      Eigen::VectorXd dh(r.size());
      Eigen::VectorXd d2h(r.size());
      for (Index t = 0; t < r.size(); ++t) {
        const double root = std::sqrt(r[t] * r[t] + mu * mu);
        dh[t] = abs_scale * abs_weights[t] * r[t] / root;
        d2h[t] = abs_scale * abs_weights[t] * mu * mu / (root * root * root);
      }
      g.noalias() -= abs_regressors * dh;
      H.noalias() += abs_regressors * d2h.asDiagonal() * abs_regressors.transpose();
    }
  }

  bool smooth_quadratic() const { return entropy_coef == 0.0 && !absolute; }
};

int default_cap(Index dim) { return static_cast<int>(100 * (dim + 1) + 100); }

Solution finish(const Objective& obj, const Eigen::VectorXd& x, int iterations) {
  Solution s;
  const Index b = obj.box_count;
  s.weights.theta = x.tail(obj.dim() - b);
  if (b > 0) s.weights.intercept = x[0];
  s.objective = obj.value(x, false) - obj.tie_value(x);
  s.iterations = iterations;
  return s;
}

Weights weights_from(const Objective& obj, const Eigen::VectorXd& x) {
  Weights w;
  w.theta = x.tail(obj.dim() - obj.box_count);
  if (obj.box_count > 0) w.intercept = x[0];
  return w;
}

Solution run_quadratic(const Objective& obj, const Eigen::VectorXd& start, double tol, int max_iters) {
  QpProblem qp{obj.P, obj.q, obj.box_count, obj.lo, obj.hi};
  const int cap = max_iters > 0 ? max_iters : default_cap(obj.dim());
  QpResult r = solve_qp(qp, start, cap);
  const Eigen::VectorXd g = obj.P * r.x + obj.q;
  const double residual = kkt_residual(obj.box_count, obj.lo, obj.hi, r.x, g, lipschitz_bound(obj.P));
  if (!r.converged || residual > tol) {
    throw ConvergenceError("active-set solve stopped after " + std::to_string(r.iterations) +
                               " iterations with KKT residual " + format_double(residual),
                           weights_from(obj, r.x), residual);
  }
  Solution s = finish(obj, r.x, r.iterations);
  s.kkt_residual = residual;
  return s;
}

// Projected Newton: each step minimizes the local quadratic model over the
// feasible set with the active-set QP, then backtracks on the true objective.
Eigen::VectorXd run_newton(const Objective& obj, Eigen::VectorXd x, double tol, int max_iters, int& iterations,
                           double& residual) {
  const Index n = obj.dim();
  const Index b = obj.box_count;
  const bool interior = obj.entropy_coef > 0.0;
  Eigen::VectorXd g;
  Eigen::MatrixXd H;
  auto measure = [&](const Eigen::VectorXd& point) {
    obj.derivatives(point, g, H);
    return kkt_residual(b, obj.lo, obj.hi, point, g, lipschitz_bound(H));
  };
  residual = measure(x);
  for (int k = 0; k < max_iters && residual > 1e-3 * tol; ++k) {
    ++iterations;
    QpProblem model{H, g - H * x, b, obj.lo, obj.hi};
    const QpResult step = solve_qp(model, x, default_cap(n));
    const Eigen::VectorXd d = step.x - x;
    // d sums to zero over the simplex block, so centering g there removes the
    // common offset that otherwise cancels in the slope.
    const double offset = g.tail(n - b).mean();
    const double slope = g.head(b).dot(d.head(b)) + (g.tail(n - b).array() - offset).matrix().dot(d.tail(n - b));
    if (d.cwiseAbs().maxCoeff() <= 1e-15) break;

    double t = 1.0;
    if (interior) {
      for (Index i = b; i < n; ++i) {
        if (d[i] < 0.0) t = std::min(t, 0.995 * x[i] / -d[i]);
      }
    }
    // Near the optimum objective differences drown in rounding, so a full step
    // that leaves the objective flat to rounding is taken when it shrinks the
    // KKT residual.
    const double f = obj.value(x, true);
    const double previous = residual;
    bool accepted = false;
    Eigen::VectorXd trial = x + t * d;
    const double f_trial = obj.value(trial, true);
    if ((slope < 0.0 && f_trial <= f + 1e-4 * t * slope) ||
        (f_trial <= f + 1e-12 * std::max(1.0, std::abs(f)) && measure(trial) < previous)) {
      x = std::move(trial);
      accepted = true;
    }
    for (t *= 0.5; !accepted && slope < 0.0 && t > 1e-20; t *= 0.5) {
      trial = x + t * d;
      if (obj.value(trial, true) <= f + 1e-4 * t * slope) {
        x = std::move(trial);
        accepted = true;
      }
    }
    if (!accepted) break;
    residual = measure(x);
  }
  residual = measure(x);
  return x;
}

Solution run_smooth(Objective obj, Eigen::VectorXd start, double tol, int max_iters) {
  const Index n = obj.dim();
  const Index b = obj.box_count;
  const int cap = max_iters > 0 ? max_iters : 200;
  int iterations = 0;
  double residual = 0.0;

  if (obj.entropy_coef > 0.0) {
    // Start strictly inside the simplex.
    const double inv = 1.0 / static_cast<double>(n - b);
    for (Index i = b; i < n; ++i) start[i] = 0.9 * start[i] + 0.1 * inv;
  }

  Eigen::VectorXd x = start;
  double effective_tol = tol;
  if (obj.absolute) {
    effective_tol = std::max(tol, kAbsoluteLossTolerance);
    const double total = std::max(1.0, obj.abs_scale * obj.abs_weights.sum());
    const double mu_final = 1e-7 / total;
    double mu = 1e-1;
    while (true) {
      obj.mu = std::max(mu, mu_final);
      x = run_newton(obj, x, effective_tol, cap, iterations, residual);
      if (obj.mu <= mu_final) break;
      mu *= 0.02;
    }
  } else {
    x = run_newton(obj, x, effective_tol, cap, iterations, residual);
  }

  if (!(residual <= effective_tol)) {
    throw ConvergenceError("projected Newton stopped after " + std::to_string(iterations) +
                               " iterations with KKT residual " + format_double(residual),
                           weights_from(obj, x), residual);
  }
  Solution s = finish(obj, x, iterations);
  s.kkt_residual = residual;
  return s;
}

// Adds Phi / eta for ridge and quadratic penalties to the quadratic part;
// entropy is flagged for the Newton path.
void add_penalty(Objective& obj, const PenaltySpec& p) {
  const Index b = obj.box_count;
  const Index n = obj.dim() - b;
  const double inv_eta = 1.0 / p.eta;
  switch (p.kind) {
    case PenaltyKind::none:
      return;
    case PenaltyKind::ridge:
      obj.P.bottomRightCorner(n, n).diagonal().array() += inv_eta;
      return;
    case PenaltyKind::quadratic: {
      const Eigen::MatrixXd XtH = p.X.transpose() * p.H;
      obj.P.bottomRightCorner(n, n) += inv_eta * XtH * p.X;
      obj.q.tail(n) -= inv_eta * XtH * p.x;
      obj.c += inv_eta * 0.5 * p.x.dot(p.H * p.x);
      return;
    }
    case PenaltyKind::entropy:
      obj.entropy_coef = inv_eta;
      obj.entropy_shift = std::log(static_cast<double>(n));
      return;
  }
}

Objective base_objective(Index box_count, Index dim) {
  Objective obj;
  obj.box_count = box_count;
  obj.lo = Eigen::VectorXd::Constant(box_count, -kInterceptBound);
  obj.hi = Eigen::VectorXd::Constant(box_count, kInterceptBound);
  obj.P = Eigen::MatrixXd::Zero(dim, dim);
  obj.q = Eigen::VectorXd::Zero(dim);
  return obj;
}

void add_tie(Objective& obj, double coef) {
  const Index n = obj.dim() - obj.box_count;
  obj.tie_coef = coef;
  obj.P.bottomRightCorner(n, n).diagonal().array() += 2.0 * coef;
}

Eigen::VectorXd default_start(Index box_count, Index dim, const std::optional<Weights>& warm) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(dim);
  const Index n = dim - box_count;
  if (warm && warm->theta.size() == n && warm->theta.allFinite()) {
    x.tail(n) = warm->theta;
    if (box_count > 0) x[0] = warm->intercept.value_or(0.0);
  } else {
    x.tail(n).setConstant(1.0 / static_cast<double>(n));
  }
  return x;
}

bool has_active_penalty(const std::optional<PenaltySpec>& p) {
  return p && p->kind != PenaltyKind::none;
}

Solution solve_stats(const LeastSquaresStats& stats, const SolveOptions& opt, Index box_count) {
  const Index dim = stats.dim();
  const Index n = dim - box_count;
  if (n < 1) throw Error(ErrorKind::invalid_input, "need at least one control unit");
  if (!(opt.tolerance > 0.0)) throw Error(ErrorKind::invalid_input, "tolerance must be positive");
  if (has_active_penalty(opt.penalty)) validate(*opt.penalty, n);

  const bool empty = stats.count() == 0 || stats.total_weight() <= 0.0;
  if (empty && !has_active_penalty(opt.penalty)) {
    Solution s;
    s.weights = Weights::uniform(n);
    if (box_count > 0) s.weights.intercept = 0.0;
    return s;
  }

  Objective obj = base_objective(box_count, dim);
  const double s = opt.loss_scale;
  obj.P = 2.0 * s * stats.gram();
  obj.q = -2.0 * s * stats.cross();
  obj.c = s * stats.target_ss();
  add_tie(obj, kTieEpsilon * s * std::max(stats.total_weight(), 0.0));
  if (opt.penalty) add_penalty(obj, *opt.penalty);

  const Eigen::VectorXd start = default_start(box_count, dim, opt.warm_start);
  if (obj.smooth_quadratic()) return run_quadratic(obj, start, opt.tolerance, opt.max_iters);
  return run_smooth(std::move(obj), start, opt.tolerance, opt.max_iters);
}

LeastSquaresStats stats_from(const Eigen::VectorXd& targets, const Eigen::MatrixXd& regressors,
                             const std::optional<Eigen::VectorXd>& weights, bool augment) {
  if (regressors.cols() != targets.size()) {
    throw Error(ErrorKind::dimension_mismatch, "regressors have " + std::to_string(regressors.cols()) +
                                                   " periods, targets have " + std::to_string(targets.size()));
  }
  if (weights) {
    if (weights->size() != targets.size()) {
      throw Error(ErrorKind::dimension_mismatch, "sample weights length differs from targets");
    }
    if ((weights->array() < 0.0).any() || !weights->allFinite()) {
      throw Error(ErrorKind::invalid_input, "sample weights must be finite and nonnegative");
    }
  }
  if (!targets.allFinite() || !regressors.allFinite()) {
    throw Error(ErrorKind::invalid_input, "solve data contains non-finite values");
  }
  const Index n = regressors.rows();
  LeastSquaresStats stats(augment ? n + 1 : n);
  Eigen::VectorXd row(augment ? n + 1 : n);
  for (Index t = 0; t < targets.size(); ++t) {
    if (augment) {
      row[0] = 1.0;
      row.tail(n) = regressors.col(t);
    } else {
      row = regressors.col(t);
    }
    stats.add(targets[t], row, weights ? (*weights)[t] : 1.0);
  }
  return stats;
}

SolveOptions options_from(const SolveSpec& spec) {
  SolveOptions opt;
  opt.penalty = spec.penalty;
  opt.loss_scale = spec.loss_scale;
  opt.tolerance = spec.tolerance;
  opt.max_iters = spec.max_iters;
  opt.warm_start = spec.warm_start;
  return opt;
}

}  // namespace

// ---------------------------------------------------------------------------

Weights Weights::uniform(Index n) {
  Weights w;
  w.theta = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  return w;
}

double Weights::predict(const Eigen::Ref<const Eigen::VectorXd>& y) const {
  if (y.size() != theta.size()) {
    throw Error(ErrorKind::dimension_mismatch, "weights have " + std::to_string(theta.size()) +
                                                   " entries, controls have " + std::to_string(y.size()));
  }
  return theta.dot(y) + intercept.value_or(0.0);
}

bool is_feasible(const Weights& w, double tol) {
  if (w.theta.size() == 0 || !w.theta.allFinite()) return false;
  if (w.theta.minCoeff() < -kFeasibilitySlack) return false;
  if (std::abs(w.theta.sum() - 1.0) > tol) return false;
  if (w.intercept && !(std::abs(*w.intercept) <= kInterceptBound + kFeasibilitySlack)) return false;
  return true;
}

void validate(const Weights& w) {
  if (!is_feasible(w)) throw Error(ErrorKind::invalid_input, "weights are not on the simplex");
}

Weights project_simplex(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const Index n = v.size();
  if (n < 1) throw Error(ErrorKind::invalid_input, "cannot project an empty vector");
  if (!v.allFinite()) throw Error(ErrorKind::invalid_input, "projection input contains NaN or infinity");

  std::vector<double> sorted(v.data(), v.data() + n);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double threshold = 0.0;
  for (Index k = 0; k < n; ++k) {
    cumulative += sorted[k];
    const double candidate = (cumulative - 1.0) / static_cast<double>(k + 1);
    if (sorted[k] - candidate > 0.0) threshold = candidate;
  }
  Weights w;
  w.theta = (v.array() - threshold).cwiseMax(0.0);
  const double sum = w.theta.sum();
  if (sum > 0.0 && std::abs(sum - 1.0) > 0.0) w.theta /= sum;
  return w;
}

std::string_view to_string(PenaltyKind kind) noexcept {
  switch (kind) {
    case PenaltyKind::none: return "none";
    case PenaltyKind::ridge: return "ridge";
    case PenaltyKind::entropy: return "entropy";
    case PenaltyKind::quadratic: return "quadratic";
  }
  return "unknown";
}

std::string_view to_string(LossKind kind) noexcept {
  return kind == LossKind::squared ? "squared" : "absolute";
}

void validate(const PenaltySpec& p, Index units) {
  if (!(p.eta > 0.0) || !std::isfinite(p.eta)) {
    throw Error(ErrorKind::invalid_penalty, "eta must be positive and finite");
  }
  if (p.kind != PenaltyKind::quadratic) return;
  if (p.H.rows() != p.H.cols() || p.X.rows() != p.H.rows() || p.X.cols() != units ||
      p.x.size() != p.H.rows()) {
    throw Error(ErrorKind::invalid_penalty, "quadratic penalty needs H (J x J), X (J x N), x (J)");
  }
  if (!p.H.allFinite() || !p.X.allFinite() || !p.x.allFinite()) {
    throw Error(ErrorKind::invalid_penalty, "quadratic penalty contains non-finite values");
  }
  const double scale = std::max(1.0, p.H.cwiseAbs().maxCoeff());
  if ((p.H - p.H.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw Error(ErrorKind::invalid_penalty, "H must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_h(p.H);
  if (eig_h.eigenvalues().minCoeff() < -1e-12 * scale) {
    throw Error(ErrorKind::invalid_penalty, "H is not positive semidefinite");
  }
  const Eigen::MatrixXd hess = p.X.transpose() * p.H * p.X;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hess);
  if (!(eig.eigenvalues().minCoeff() > 1e-12 * std::max(1.0, hess.cwiseAbs().maxCoeff()))) {
    throw Error(ErrorKind::invalid_penalty, "X'HX is not positive definite");
  }
}

PenaltySpec normalize_quadratic(PenaltySpec p) {
  if (p.kind != PenaltyKind::quadratic) return p;
  validate(p, p.X.cols());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(p.X.transpose() * p.H * p.X);
  p.H /= eig.eigenvalues().minCoeff();
  return p;
}

double penalty_value(const PenaltySpec& p, const Eigen::Ref<const Eigen::VectorXd>& theta) {
  switch (p.kind) {
    case PenaltyKind::none:
      return 0.0;
    case PenaltyKind::ridge:
      return 0.5 * theta.squaredNorm();
    case PenaltyKind::entropy: {
      double v = std::log(static_cast<double>(theta.size()));
      for (Index i = 0; i < theta.size(); ++i) {
        if (theta[i] > 0.0) v += theta[i] * std::log(theta[i]);
      }
      return v;
    }
    case PenaltyKind::quadratic: {
      const Eigen::VectorXd r = p.x - p.X * theta;
      return 0.5 * r.dot(p.H * r);
    }
  }
  return 0.0;
}

double penalty_range(const PenaltySpec& p, Index units) {
  validate(p, units);
  const double n = static_cast<double>(units);
  switch (p.kind) {
    case PenaltyKind::none:
      return 0.0;
    case PenaltyKind::ridge:
      return 0.5 * (1.0 - 1.0 / n);
    case PenaltyKind::entropy:
      return std::log(n);
    case PenaltyKind::quadratic: {
      // A convex function attains its maximum over a polytope at a vertex.
      double sup = -std::numeric_limits<double>::infinity();
      for (Index i = 0; i < units; ++i) {
        sup = std::max(sup, penalty_value(p, Eigen::VectorXd::Unit(units, i)));
      }
      Objective obj = base_objective(0, units);
      const Eigen::MatrixXd XtH = p.X.transpose() * p.H;
      obj.P = XtH * p.X;
      obj.q = -XtH * p.x;
      obj.c = 0.5 * p.x.dot(p.H * p.x);
      add_tie(obj, 0.0);
      const Solution inf = run_quadratic(obj, Weights::uniform(units).theta, kDefaultTolerance, 0);
      return sup - penalty_value(p, inf.weights.theta);
    }
  }
  return 0.0;
}

std::pair<double, double> penalty_value_and_range(const PenaltySpec& p,
                                                  const Eigen::Ref<const Eigen::VectorXd>& theta) {
  return {penalty_value(p, theta), penalty_range(p, theta.size())};
}

LeastSquaresStats::LeastSquaresStats(Index dim)
    : gram_(Eigen::MatrixXd::Zero(dim, dim)), cross_(Eigen::VectorXd::Zero(dim)) {}

void LeastSquaresStats::add(double target, const Eigen::Ref<const Eigen::VectorXd>& regressors, double weight) {
  gram_.selfadjointView<Eigen::Lower>().rankUpdate(regressors, weight);
  gram_.triangularView<Eigen::StrictlyUpper>() = gram_.transpose();
  cross_ += (weight * target) * regressors;
  target_ss_ += weight * target * target;
  total_weight_ += weight;
  ++count_;
}

void LeastSquaresStats::merge(const LeastSquaresStats& other, double sign) {
  gram_ += sign * other.gram_;
  cross_ += sign * other.cross_;
  target_ss_ += sign * other.target_ss_;
  total_weight_ += sign * other.total_weight_;
  count_ += sign > 0.0 ? other.count_ : -other.count_;
}

double LeastSquaresStats::value(const Eigen::Ref<const Eigen::VectorXd>& theta) const {
  return std::max(theta.dot(gram_ * theta) - 2.0 * cross_.dot(theta) + target_ss_, 0.0);
}

ConvergenceError::ConvergenceError(const std::string& message, Weights last_iterate, double kkt_residual)
    : Error(ErrorKind::non_convergence, message),
      last_iterate_(std::move(last_iterate)),
      kkt_residual_(kkt_residual) {}

Solution solve_simplex_ls(const LeastSquaresStats& stats, const SolveOptions& options) {
  return solve_stats(stats, options, 0);
}

Solution solve_affine_ls(const LeastSquaresStats& augmented, const SolveOptions& options) {
  return solve_stats(augmented, options, 1);
}

Solution solve_simplex_absolute(const Eigen::Ref<const Eigen::VectorXd>& targets,
                                const Eigen::Ref<const Eigen::MatrixXd>& regressors,
                                const Eigen::Ref<const Eigen::VectorXd>& sample_weights,
                                const SolveOptions& opt) {
  const Index n = regressors.rows();
  if (n < 1) throw Error(ErrorKind::invalid_input, "need at least one control unit");
  if (regressors.cols() != targets.size() || sample_weights.size() != targets.size()) {
    throw Error(ErrorKind::dimension_mismatch, "absolute-loss data have inconsistent lengths");
  }
  if (has_active_penalty(opt.penalty)) validate(*opt.penalty, n);
  const double total = sample_weights.sum();
  if ((targets.size() == 0 || total <= 0.0) && !has_active_penalty(opt.penalty)) {
    Solution s;
    s.weights = Weights::uniform(n);
    return s;
  }

  Objective obj = base_objective(0, n);
  obj.absolute = true;
  obj.abs_targets = targets;
  obj.abs_regressors = regressors;
  obj.abs_weights = sample_weights;
  obj.abs_scale = opt.loss_scale;
  add_tie(obj, kTieEpsilon * opt.loss_scale * std::max(total, 0.0));
  if (opt.penalty) add_penalty(obj, *opt.penalty);
  return run_smooth(std::move(obj), default_start(0, n, opt.warm_start), opt.tolerance, opt.max_iters);
}

Solution solve_constrained_ls(const SolveSpec& spec) {
  const SolveOptions opt = options_from(spec);
  if (spec.loss == LossKind::absolute) {
    if (spec.sample_weights && ((spec.sample_weights->array() < 0.0).any() || !spec.sample_weights->allFinite())) {
      throw Error(ErrorKind::invalid_input, "sample weights must be finite and nonnegative");
    }
    const Eigen::VectorXd w = spec.sample_weights.value_or(Eigen::VectorXd::Ones(spec.targets.size()));
    return solve_simplex_absolute(spec.targets, spec.regressors, w, opt);
  }
  return solve_simplex_ls(stats_from(spec.targets, spec.regressors, spec.sample_weights, false), opt);
}

Solution solve_affine_ls(const SolveSpec& spec) {
  if (spec.loss == LossKind::absolute) {
    throw Error(ErrorKind::invalid_input, "affine solve supports squared loss only");
  }
  return solve_affine_ls(stats_from(spec.targets, spec.regressors, spec.sample_weights, true),
                         options_from(spec));
}

double objective_value(const SolveSpec& spec, const Weights& w) {
  double data = 0.0;
  for (Index t = 0; t < spec.targets.size(); ++t) {
    const double r = spec.targets[t] - w.predict(spec.regressors.col(t));
    const double weight = spec.sample_weights ? (*spec.sample_weights)[t] : 1.0;
    data += weight * (spec.loss == LossKind::squared ? r * r : std::abs(r));
  }
  double v = spec.loss_scale * data;
  if (has_active_penalty(spec.penalty)) v += penalty_value(*spec.penalty, w.theta) / spec.penalty->eta;
  return v;
}

double default_eta(PenaltyKind kind, Index units, Index horizon, double range_k) {
  if (units < 1 || horizon < 1) throw Error(ErrorKind::invalid_input, "N and T must be positive");
  const double n = static_cast<double>(units);
  const double T = static_cast<double>(horizon);
  switch (kind) {
    case PenaltyKind::ridge:
      return 1.0 / std::sqrt(4.0 * n * T);
    case PenaltyKind::entropy:
      // The simplex is a single point when N = 1; any eta works.
      return units == 1 ? 1.0 : std::sqrt(std::log(n) / T);
    case PenaltyKind::quadratic:
      if (!(range_k > 0.0)) throw Error(ErrorKind::invalid_penalty, "quadratic penalty range K must be positive");
      return std::sqrt(range_k / (2.0 * n * T));
    case PenaltyKind::none:
      break;
  }
  throw Error(ErrorKind::invalid_penalty, "no default eta without a penalty");
}

}  // namespace synthreg
