#pragma once

#include "synthreg/panel.hpp"
#include "synthreg/strategies.hpp"

#include <nlohmann/json.hpp>

#include <optional>

namespace synthreg {

/// Observed data around a realized treatment period S (1-based). The treated
/// series holds y0_t before S and the treated outcome y_t(1) from S on.
struct ObservedStudy {
  Eigen::VectorXd observed;
  Eigen::MatrixXd controls;
  Index treatment_period = 1;
  /// Hypothesized effects y(1) - y(0); zero when unset.
  std::optional<Eigen::VectorXd> null_effects;
};

void validate(const ObservedStudy& study);

/// Panel of untreated outcomes implied by the sharp null: z_t is removed from
/// periods t >= S.
Panel null_adjusted_panel(const ObservedStudy& study);

/// r_t = |y0_t - yhat_t| from a protocol run on the null-adjusted panel. The
/// predictions never see S beyond the null adjustment itself.
Eigen::VectorXd null_residuals(const ObservedStudy& study, const StrategyConfig& strategy);

struct RankTest {
  double p_value = 1.0;
  bool reject = false;
  double alpha = 0.05;
  double C = 1.0;
  /// 1-based ascending order statistic T - floor(T alpha / C); the test
  /// rejects iff r_S is strictly above it.
  Index threshold_index = 0;
  /// #{t : r_t >= r_S}.
  Index residual_rank = 0;
};

/// p = min(1, C #{t : r_t >= r_S} / T); rejects iff p <= alpha. Ties count
/// against rejection, so over S ~ Unif[T] the rejection rate is at most
/// floor(T alpha / C) / T.
RankTest rank_test(const Eigen::Ref<const Eigen::VectorXd>& residuals, Index treatment_period, double alpha,
                   double C = 1.0);

RankTest randomization_test(const ObservedStudy& study, const StrategyConfig& strategy, double alpha,
                            double C = 1.0);

nlohmann::json to_json(const RankTest& test);
RankTest rank_test_from_json(const nlohmann::json& j);

/// c = (oracle_avg_loss + regret_bound / T) / delta, so that
/// P_S((y0_S - yhat_S)^2 > c) <= delta.
double markov_interval(double oracle_avg_loss, double regret_bound, Index horizon, double delta);

/// min over the simplex of the average squared loss on periods before S.
double pre_treatment_oracle_loss(const Panel& panel, Index treatment_period);

}  // namespace synthreg
