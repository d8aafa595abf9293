#include "synthreg/adversary.hpp"
#include "synthreg/protocol.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace synthreg;

namespace {

StrategyConfig config_of(StrategyKind kind) {
  StrategyConfig c;
  c.kind = kind;
  return c;
}

double hazan(double n, double R, double a, double b, double D, double T) {
  return 2.0 * n * b * b / a * (std::log(D * R * a * T / b) + 1.0);
}

}  // namespace

TEST(Protocol, LossesMatchPredictions) {
  const Panel p = oracle::random_panel(50, 3, 10);
  const Trajectory traj = run_protocol(config_of(StrategyKind::ftl), p);
  ASSERT_EQ(traj.periods(), 10);
  ASSERT_EQ(traj.weights.size(), 10u);
  for (Index t = 0; t < 10; ++t) {
    EXPECT_DOUBLE_EQ(traj.losses[t], std::pow(p.treated[t] - traj.predictions[t], 2));
  }
  EXPECT_EQ(traj.panel_hash, panel_hash(p));
}

TEST(Protocol, SingleControlHasZeroRegret) {
  const Panel p = oracle::random_panel(51, 1, 30);
  const Trajectory traj = run_protocol(config_of(StrategyKind::ftl), p);
  const RegretReport r = compute_regret(traj, oracle_fixed_weights(p, ComparatorClass::simplex));
  EXPECT_NEAR(r.regret, 0.0, 1e-12);
}

TEST(Oracle, SimplexMatchesFista) {
  const Panel p = oracle::random_panel(52, 4, 25);
  const OracleResult o = oracle_fixed_weights(p, ComparatorClass::simplex);
  EXPECT_NEAR(o.total_loss, oracle::simplex_ls_min(p.treated, p.controls), 1e-8);
  EXPECT_NEAR(o.losses.sum(), o.total_loss, 1e-12);
}

TEST(Oracle, TwfeClassIsMatchOnHistoricalDiff) {
  const Panel p = oracle::random_panel(53, 3, 20);
  const OracleResult o = oracle_fixed_weights(p, ComparatorClass::twfe);
  const TransformedPanel h = historical_diff(p);
  EXPECT_NEAR(o.total_loss, oracle::simplex_ls_min(h.values.treated, h.values.controls), 1e-8);
  // Each comparator loss equals the squared error of the TWFE forecast with o.weights.
  for (Index t = 1; t < 20; ++t) {
    const double f = twfe_predict(p.treated.head(t), p.controls.leftCols(t), p.controls.col(t), o.weights);
    EXPECT_NEAR(o.losses[t], std::pow(p.treated[t] - f, 2), 1e-10);
  }
}

TEST(Oracle, AbsoluteLossAgreesWithGrid) {
  const Panel p = oracle::random_panel(54, 2, 15);
  const OracleResult o = oracle_fixed_weights(p, ComparatorClass::simplex, LossKind::absolute);
  double best = std::numeric_limits<double>::infinity();
  oracle::for_each_grid_point(2, 20000, [&](const Eigen::VectorXd& th) {
    best = std::min(best, (p.treated - p.controls.transpose() * th).cwiseAbs().sum());
  });
  EXPECT_NEAR(o.total_loss, best, 1e-4);
}

TEST(Regret, BoundFormulas) {
  const double sqrt5 = std::sqrt(5.0);
  EXPECT_NEAR(theoretical_bound(BoundKind::theorem1, 5, 100), 16.0 * 5 * (std::log(sqrt5 * 100) + 1.0), 1e-9);
  EXPECT_NEAR(theoretical_bound(BoundKind::theorem1, 5, 100), 512.8, 0.05);
  EXPECT_NEAR(theoretical_bound(BoundKind::corollary1, 3, 100, BoundParams{.C = 2.0}),
              16.0 * 8 * 3 * (std::log(std::sqrt(3.0) * 100 / 4.0) + 1.0), 1e-9);
  EXPECT_NEAR(theoretical_bound(BoundKind::theorem2, 4, 50), hazan(4, 2, 1, 4, 2, 50), 1e-9);
  EXPECT_NEAR(theoretical_bound(BoundKind::first_diff, 4, 50), 2 * hazan(4, 4, 1, 4, 2, 50), 1e-9);
  EXPECT_NEAR(theoretical_bound(BoundKind::static_did, 4, 50),
              64.0 * 4 * (std::log(sqrt5 / 2 * std::sqrt(5.0) * 50) + 1.0), 1e-9);
  EXPECT_NEAR(theoretical_bound(BoundKind::ftrl_ridge, 2, 100), 2 * std::sqrt(200.0), 1e-12);
  EXPECT_NEAR(theoretical_bound(BoundKind::ftrl_entropy, 8, 100), 3 * std::sqrt(100 * std::log(8.0)), 1e-12);
  EXPECT_NEAR(theoretical_bound(BoundKind::ftrl_quadratic, 2, 100, BoundParams{.K = 0.25}),
              2 * std::sqrt(2 * 0.25 * 2 * 100), 1e-12);
}

TEST(Regret, StrategyBoundsAreInUnscaledLossUnits) {
  StrategyConfig ridge = config_of(StrategyKind::ftrl);
  // Squared-loss theorems are for (y - yhat)^2 / 2; reports are unscaled.
  EXPECT_NEAR(*strategy_bound(ridge, 2, 100), 2 * theoretical_bound(BoundKind::ftrl_ridge, 2, 100), 1e-9);
  ridge.loss = LossKind::absolute;
  EXPECT_NEAR(*strategy_bound(ridge, 2, 100), theoretical_bound(BoundKind::ftrl_ridge, 2, 100), 1e-9);
  StrategyConfig entropy = config_of(StrategyKind::ftrl);
  entropy.penalty = PenaltyKind::entropy;
  entropy.loss = LossKind::absolute;
  // K / eta + 2 eta T with K = ln N and the default eta = sqrt(ln N / T).
  EXPECT_NEAR(*strategy_bound(entropy, 8, 100), 3 * std::sqrt(100 * std::log(8.0)), 1e-9);
  EXPECT_NEAR(*strategy_bound(entropy, 8, 100), theoretical_bound(BoundKind::ftrl_entropy, 8, 100), 1e-9);
  EXPECT_FALSE(strategy_bound(config_of(StrategyKind::flh), 3, 10));
  EXPECT_FALSE(strategy_bound(config_of(StrategyKind::weighted_ftl), 3, 10));
}

TEST(Regret, ReportJsonRoundTrip) {
  const Panel p = oracle::random_panel(55, 3, 12);
  const Trajectory traj = run_protocol(config_of(StrategyKind::ftl), p);
  RegretReport r = compute_regret(traj, oracle_fixed_weights(p, ComparatorClass::simplex));
  r.bound = 12.5;
  r.seed = 77;
  r.adaptive_regret = 1.25;
  r.adaptive_stride = 1;
  const RegretReport q = regret_report_from_json(nlohmann::json::parse(to_json(r).dump()));
  EXPECT_EQ(q.strategy, r.strategy);
  EXPECT_EQ(q.panel_hash, r.panel_hash);
  EXPECT_EQ(q.regret, r.regret);
  EXPECT_EQ(q.oracle_weights.theta, r.oracle_weights.theta);
  EXPECT_EQ(q.bound, r.bound);
  EXPECT_EQ(q.seed, r.seed);
  EXPECT_EQ(q.adaptive_regret, r.adaptive_regret);
  EXPECT_FALSE(q.weighted_regret);
  EXPECT_THROW(regret_report_from_json(nlohmann::json::object()), Error);
}

TEST(Regret, RiskIsPiWeightedLoss) {
  const Panel p = oracle::random_panel(56, 2, 6);
  const Trajectory traj = run_protocol(config_of(StrategyKind::ftl), p);
  Eigen::VectorXd pi(6);
  pi << 0.1, 0.2, 0.3, 0.1, 0.2, 0.1;
  const RegretReport r = compute_regret(traj, oracle_fixed_weights(p, ComparatorClass::simplex), pi);
  EXPECT_NEAR(r.risk, pi.dot(traj.losses), 1e-14);
  const RegretReport u = compute_regret(traj, oracle_fixed_weights(p, ComparatorClass::simplex));
  EXPECT_NEAR(u.risk, traj.losses.mean(), 1e-14);
}

TEST(Regret, WeightedRegretMatchesDefinition) {
  const Panel p = oracle::random_panel(57, 3, 10);
  std::mt19937_64 gen(57);
  const Eigen::VectorXd pi = oracle::random_simplex_point(gen, 10);
  StrategyConfig c = config_of(StrategyKind::weighted_ftl);
  c.timing = pi;
  const Trajectory traj = run_protocol(c, p);
  const Eigen::VectorXd sw = pi.cwiseSqrt();
  const double best = oracle::simplex_ls_min(p.treated.cwiseProduct(sw), p.controls * sw.asDiagonal());
  EXPECT_NEAR(weighted_regret(traj, p, pi), 10.0 * (pi.dot(traj.losses) - best), 1e-7);
}

TEST(Regret, AdaptiveRegretMatchesBruteForce) {
  const Panel p = oracle::random_panel(58, 2, 14);
  const Trajectory traj = run_protocol(config_of(StrategyKind::ftl), p);
  double best = -std::numeric_limits<double>::infinity();
  for (Index r = 0; r < 14; ++r) {
    for (Index s = r; s < 14; ++s) {
      const Index len = s - r + 1;
      const double oracle = oracle::simplex_ls_min(p.treated.segment(r, len), p.controls.middleCols(r, len));
      best = std::max(best, traj.losses.segment(r, len).sum() - oracle);
    }
  }
  const AdaptiveRegret a = adaptive_regret(traj, p);
  EXPECT_EQ(a.stride, 1);
  EXPECT_NEAR(a.value, best, 1e-7);
}

TEST(ExpectedLoss, HoldsAndRejectsHeavyTiming) {
  const Panel p = oracle::random_panel(59, 3, 20);
  const Trajectory traj = run_protocol(config_of(StrategyKind::ftl), p);
  const OracleResult o = oracle_fixed_weights(p, ComparatorClass::simplex);
  TimingSpec spec;
  spec.kind = TimingKind::bounded_density;
  spec.C = 2.0;
  spec.seed = 3;
  const Eigen::VectorXd pi = generate_timing(spec, 20);
  const ExpectedLossCheck c = expected_loss_bound_check(traj, pi, 2.0, o);
  EXPECT_TRUE(c.holds);
  EXPECT_NEAR(c.lhs, pi.dot(traj.losses), 1e-14);
  Eigen::VectorXd heavy = Eigen::VectorXd::Zero(20);
  heavy[0] = 1.0;
  EXPECT_THROW(expected_loss_bound_check(traj, heavy, 2.0, o), Error);
}

TEST(Curves, CumulativeColumns) {
  const Panel p = oracle::random_panel(60, 2, 5);
  const Trajectory traj = run_protocol(config_of(StrategyKind::ftl), p);
  const OracleResult o = oracle_fixed_weights(p, ComparatorClass::simplex);
  std::stringstream ss;
  write_regret_curve(ss, traj, o);
  std::string line;
  std::getline(ss, line);
  EXPECT_EQ(line, "t,strategy_cumloss,oracle_cumloss");
  double cum = 0.0;
  for (Index t = 0; t < 5; ++t) {
    std::getline(ss, line);
    cum += traj.losses[t];
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    EXPECT_EQ(std::stoi(line.substr(0, c1)), t + 1);
    EXPECT_NEAR(*parse_double(line.substr(c1 + 1, c2 - c1 - 1)), cum, 1e-14);
  }
}

TEST(Comparator, DefaultsPerStrategy) {
  EXPECT_EQ(default_comparator(StrategyKind::ftl), ComparatorClass::simplex);
  EXPECT_EQ(default_comparator(StrategyKind::differenced_sc), ComparatorClass::twfe);
  EXPECT_EQ(default_comparator(StrategyKind::demeaned_sc), ComparatorClass::affine);
  EXPECT_EQ(default_comparator(StrategyKind::first_diff_sc), ComparatorClass::first_diff);
  EXPECT_EQ(parse_comparator("twfe"), ComparatorClass::twfe);
  EXPECT_FALSE(parse_comparator("bogus"));
}
