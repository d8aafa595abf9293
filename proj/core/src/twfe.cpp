#include "synthreg/strategies.hpp"

#include <vector>

namespace synthreg {

namespace {

void check_inputs(const Eigen::Ref<const Eigen::VectorXd>& past_treated,
                  const Eigen::Ref<const Eigen::MatrixXd>& past_controls,
                  const Eigen::Ref<const Eigen::VectorXd>& current_controls, const Weights& w) {
  if (past_controls.cols() != past_treated.size()) {
    throw Error(ErrorKind::dimension_mismatch, "past treated and control histories differ in length");
  }
  if (past_controls.rows() != current_controls.size() || w.theta.size() != current_controls.size()) {
    throw Error(ErrorKind::dimension_mismatch, "twfe weights, history and current controls differ in N");
  }
  validate(w);
}

}  // namespace

double twfe_predict(const Eigen::Ref<const Eigen::VectorXd>& past_treated,
                    const Eigen::Ref<const Eigen::MatrixXd>& past_controls,
                    const Eigen::Ref<const Eigen::VectorXd>& current_controls, const Weights& w) {
  check_inputs(past_treated, past_controls, current_controls, w);
  if (past_treated.size() == 0) return w.theta.dot(current_controls);
  const Eigen::VectorXd control_means = past_controls.rowwise().mean();
  return past_treated.mean() + w.theta.dot(current_controls - control_means);
}

double twfe_predict_regression(const Eigen::Ref<const Eigen::VectorXd>& past_treated,
                               const Eigen::Ref<const Eigen::MatrixXd>& past_controls,
                               const Eigen::Ref<const Eigen::VectorXd>& current_controls, const Weights& w) {
  check_inputs(past_treated, past_controls, current_controls, w);
  const Index history = past_treated.size();
  if (history == 0) return w.theta.dot(current_controls);

  // Units with zero weight drop out of the weighted regression.
  std::vector<Index> active;
  for (Index i = 0; i < w.theta.size(); ++i) {
    if (w.theta[i] > 0.0) active.push_back(i);
  }
  const auto units = static_cast<Index>(active.size()) + 1;  // treated unit first
  const Index periods = history + 1;
  // Parameters: mu_0..mu_units-1, then alpha_2..alpha_S (alpha_1 = 0). The
  // treated observation at S is absorbed by lambda and therefore omitted.
  const Index dim = units + periods - 1;
  Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd row(dim);

  auto add = [&](Index unit, Index period, double weight, double value) {
    row.setZero();
    row[unit] = 1.0;
    if (period > 0) row[units + period - 1] = 1.0;
    normal.noalias() += weight * row * row.transpose();
    rhs.noalias() += weight * value * row;
  };
  for (Index t = 0; t < history; ++t) add(0, t, 1.0, past_treated[t]);
  for (Index u = 1; u < units; ++u) {
    const Index i = active[static_cast<std::size_t>(u - 1)];
    for (Index t = 0; t < history; ++t) add(u, t, w.theta[i], past_controls(i, t));
    add(u, history, w.theta[i], current_controls[i]);
  }
  const Eigen::VectorXd coef = normal.ldlt().solve(rhs);
  return coef[0] + coef[units + periods - 2];
}

}  // namespace synthreg
