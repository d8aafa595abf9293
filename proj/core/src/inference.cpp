#include "synthreg/inference.hpp"

#include "synthreg/protocol.hpp"

#include <cmath>

namespace synthreg {

void validate(const ObservedStudy& study) {
  const Index T = study.observed.size();
  if (T < 1) throw Error(ErrorKind::empty_panel, "study has no periods");
  if (study.controls.cols() != T) throw Error(ErrorKind::dimension_mismatch, "controls and outcome differ in T");
  if (study.treatment_period < 1 || study.treatment_period > T) {
    throw Error(ErrorKind::invalid_input, "treatment period must lie in [1, T]");
  }
  if (study.null_effects && study.null_effects->size() != T) {
    throw Error(ErrorKind::dimension_mismatch, "null effect vector must have T entries");
  }
}

Panel null_adjusted_panel(const ObservedStudy& study) {
  validate(study);
  Eigen::VectorXd untreated = study.observed;
  if (study.null_effects) {
    const Index first = study.treatment_period - 1;
    untreated.tail(untreated.size() - first) -= study.null_effects->tail(untreated.size() - first);
  }
  return make_panel(std::move(untreated), study.controls);
}

Eigen::VectorXd null_residuals(const ObservedStudy& study, const StrategyConfig& strategy) {
  const Panel panel = null_adjusted_panel(study);
  const Trajectory traj = run_protocol(strategy, panel);
  return (panel.treated - traj.predictions).cwiseAbs();
}

RankTest rank_test(const Eigen::Ref<const Eigen::VectorXd>& residuals, Index treatment_period, double alpha,
                   double C) {
  const Index T = residuals.size();
  if (T < 1) throw Error(ErrorKind::empty_panel, "no residuals");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::invalid_input, "alpha must lie in (0, 1)");
  if (!(C >= 1.0)) throw Error(ErrorKind::invalid_input, "C must be at least 1");
  if (treatment_period < 1 || treatment_period > T) {
    throw Error(ErrorKind::invalid_input, "treatment period must lie in [1, T]");
  }
  if (!residuals.allFinite() || (residuals.array() < 0.0).any()) {
    throw Error(ErrorKind::invalid_input, "residuals must be finite and nonnegative");
  }
  RankTest out;
  out.alpha = alpha;
  out.C = C;
  const double r_s = residuals[treatment_period - 1];
  out.residual_rank = (residuals.array() >= r_s).count();
  // Guard against T * alpha landing a hair below an integer.
  const auto allowed = static_cast<Index>(std::floor(static_cast<double>(T) * alpha / C + 1e-9));
  out.threshold_index = T - allowed;
  out.p_value = std::min(1.0, C * static_cast<double>(out.residual_rank) / static_cast<double>(T));
  out.reject = out.residual_rank <= allowed;
  return out;
}

RankTest randomization_test(const ObservedStudy& study, const StrategyConfig& strategy, double alpha, double C) {
  const Eigen::VectorXd r = null_residuals(study, strategy);
  return rank_test(r, study.treatment_period, alpha, C);
}

nlohmann::json to_json(const RankTest& t) {
  return {
      {"p_value", t.p_value},         {"reject", t.reject},
      {"alpha", t.alpha},             {"C", t.C},
      {"threshold_index", t.threshold_index}, {"residual_rank", t.residual_rank},
  };
}

RankTest rank_test_from_json(const nlohmann::json& j) {
  try {
    RankTest t;
    t.p_value = j.at("p_value").get<double>();
    t.reject = j.at("reject").get<bool>();
    t.alpha = j.at("alpha").get<double>();
    t.C = j.at("C").get<double>();
    t.threshold_index = j.at("threshold_index").get<Index>();
    t.residual_rank = j.at("residual_rank").get<Index>();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, std::string("test report: ") + e.what());
  }
}

double markov_interval(double oracle_avg_loss, double regret_bound, Index horizon, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorKind::invalid_input, "delta must lie in (0, 1)");
  if (horizon < 1) throw Error(ErrorKind::invalid_input, "horizon must be positive");
  if (!(oracle_avg_loss >= 0.0) || !(regret_bound >= 0.0)) {
    throw Error(ErrorKind::invalid_input, "loss and regret bound must be nonnegative");
  }
  return (oracle_avg_loss + regret_bound / static_cast<double>(horizon)) / delta;
}

double pre_treatment_oracle_loss(const Panel& panel, Index treatment_period) {
  if (treatment_period < 2 || treatment_period > panel.periods()) {
    throw Error(ErrorKind::insufficient_history, "pre-treatment loss needs at least one period before S");
  }
  const OracleResult oracle = oracle_fixed_weights(panel.prefix(treatment_period - 1), ComparatorClass::simplex);
  return oracle.total_loss / static_cast<double>(treatment_period - 1);
}

}  // namespace synthreg
