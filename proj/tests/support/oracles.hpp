#pragma once

// Reference computations used by the tests. Everything here is written
// independently of the library: plain loops, std::mt19937_64 draws and
// generic solvers, so agreement with the library is meaningful.

#include "synthreg/panel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

namespace synthreg::oracle {

inline Eigen::MatrixXd uniform_matrix(std::mt19937_64& gen, Index rows, Index cols, double lo = -1.0,
                                      double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Eigen::MatrixXd m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = d(gen);
  return m;
}

inline Panel random_panel(std::uint64_t seed, Index N, Index T) {
  std::mt19937_64 gen(seed);
  Eigen::MatrixXd all = uniform_matrix(gen, N + 1, T);
  return make_panel(all.row(0).transpose(), all.bottomRows(N));
}

inline Eigen::VectorXd random_simplex_point(std::mt19937_64& gen, Index n) {
  std::exponential_distribution<double> e(1.0);
  Eigen::VectorXd v(n);
  for (Index i = 0; i < n; ++i) v[i] = e(gen);
  return v / v.sum();
}

// Bisection on the threshold tau with sum max(v - tau, 0) = 1.
inline Eigen::VectorXd bisect_projection(const Eigen::VectorXd& v) {
  double lo = v.minCoeff() - 1.0;
  double hi = v.maxCoeff();
  for (int k = 0; k < 200; ++k) {
    const double mid = 0.5 * (lo + hi);
    if ((v.array() - mid).max(0.0).sum() > 1.0) lo = mid; else hi = mid;
  }
  return (v.array() - 0.5 * (lo + hi)).max(0.0).matrix();
}

// FISTA for min over the simplex of f with gradient `grad` and Lipschitz L.
inline Eigen::VectorXd fista_simplex(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad, Index n,
                                     double L, int iters = 20000) {
  Eigen::VectorXd x = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  Eigen::VectorXd y = x;
  double t = 1.0;
  for (int k = 0; k < iters; ++k) {
    const Eigen::VectorXd next = bisect_projection(y - grad(y) / L);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = next + ((t - 1.0) / t_next) * (next - x);
    x = next;
    t = t_next;
  }
  return x;
}

// min over the simplex of sum (y0_s - theta'y_s)^2 for the given periods.
inline double simplex_ls_min(const Eigen::VectorXd& targets, const Eigen::MatrixXd& regressors,
                             Eigen::VectorXd* argmin = nullptr) {
  const Eigen::MatrixXd G = regressors * regressors.transpose();
  const Eigen::VectorXd b = regressors * targets;
  const double L = 2.0 * std::max(G.eigenvalues().real().maxCoeff(), 1e-12);
  const Eigen::VectorXd x = fista_simplex([&](const Eigen::VectorXd& th) { return 2.0 * (G * th - b); },
                                          regressors.rows(), L);
  if (argmin) *argmin = x;
  return (targets - regressors.transpose() * x).squaredNorm();
}

// Visits every point of the simplex grid with spacing 1/steps (n <= 3).
inline void for_each_grid_point(Index n, int steps, const std::function<void(const Eigen::VectorXd&)>& fn) {
  Eigen::VectorXd p(n);
  const double h = 1.0 / steps;
  if (n == 1) {
    p[0] = 1.0;
    fn(p);
  } else if (n == 2) {
    for (int i = 0; i <= steps; ++i) {
      p << i * h, 1.0 - i * h;
      fn(p);
    }
  } else {
    for (int i = 0; i <= steps; ++i)
      for (int j = 0; i + j <= steps; ++j) {
        p << i * h, j * h, std::max(0.0, 1.0 - (i + j) * h);
        fn(p);
      }
  }
}

// Weighted TWFE with a treatment dummy: y_it = mu_i + alpha_t + tau D_it over
// the treated unit (weight 1) and controls (weight w_i), periods 1..S. Returns
// the untreated forecast y_S - tau.
inline double twfe_dummy_regression(const Eigen::VectorXd& past_treated, const Eigen::MatrixXd& past_controls,
                                    const Eigen::VectorXd& current_controls, const Eigen::VectorXd& w,
                                    double current_treated) {
  const Index N = w.size();
  const Index S = past_treated.size() + 1;
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> ys, ws;
  const Index dim = (N + 1) + (S - 1) + 1;
  auto push = [&](Index unit, Index period, double weight, double value, bool treated) {
    if (weight <= 0.0) return;
    Eigen::VectorXd r = Eigen::VectorXd::Zero(dim);
    r[unit] = 1.0;
    if (period > 0) r[N + period] = 1.0;
    if (treated) r[dim - 1] = 1.0;
    rows.push_back(r);
    ys.push_back(value);
    ws.push_back(weight);
  };
  for (Index t = 0; t < S - 1; ++t) push(0, t, 1.0, past_treated[t], false);
  push(0, S - 1, 1.0, current_treated, true);
  for (Index i = 0; i < N; ++i) {
    for (Index t = 0; t < S - 1; ++t) push(i + 1, t, w[i], past_controls(i, t), false);
    push(i + 1, S - 1, w[i], current_controls[i], false);
  }
  Eigen::MatrixXd X(static_cast<Index>(rows.size()), dim);
  Eigen::VectorXd y(X.rows());
  for (Index k = 0; k < X.rows(); ++k) {
    const double s = std::sqrt(ws[static_cast<std::size_t>(k)]);
    X.row(k) = s * rows[static_cast<std::size_t>(k)].transpose();
    y[k] = s * ys[static_cast<std::size_t>(k)];
  }
  // Minimum-norm solution; the forecast is identified even when units drop out.
  const Eigen::VectorXd beta = X.completeOrthogonalDecomposition().solve(y);
  return current_treated - beta[dim - 1];
}

}  // namespace synthreg::oracle
