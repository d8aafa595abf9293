#include "synthreg/protocol.hpp"
#include "synthreg/strategies.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace synthreg;

namespace {

StrategyConfig config_of(StrategyKind kind) {
  StrategyConfig c;
  c.kind = kind;
  return c;
}

}  // namespace

TEST(Strategy, FtlPredictsWithThePastLeader) {
  const Panel p = oracle::random_panel(31, 3, 12);
  const Trajectory traj = run_protocol(config_of(StrategyKind::ftl), p);
  EXPECT_NEAR(traj.predictions[0], p.controls.col(0).mean(), 1e-12);
  for (Index t = 1; t < p.periods(); ++t) {
    Eigen::VectorXd theta;
    oracle::simplex_ls_min(p.treated.head(t), p.controls.leftCols(t), &theta);
    // Compare objectives; minimizers can be non-unique for small t.
    const auto f = [&](const Eigen::VectorXd& th) {
      return (p.treated.head(t) - p.controls.leftCols(t).transpose() * th).squaredNorm();
    };
    EXPECT_NEAR(f(traj.weights[static_cast<std::size_t>(t)].theta), f(theta), 1e-7) << "t=" << t;
  }
}

TEST(Strategy, PredictionsIgnoreFuturePeriods) {
  Panel p = oracle::random_panel(32, 4, 15);
  const Trajectory before = run_protocol(config_of(StrategyKind::ftl), p);
  p.treated[10] += 0.5;
  p.controls.col(12).setConstant(0.3);
  const Trajectory after = run_protocol(config_of(StrategyKind::ftl), p);
  EXPECT_EQ(before.predictions.head(11), after.predictions.head(11));
  EXPECT_NE(before.predictions[11], after.predictions[11]);
}

TEST(Strategy, FixedWeightsPredictThetaTimesControls) {
  const Panel p = oracle::random_panel(33, 3, 8);
  StrategyConfig c = config_of(StrategyKind::fixed_weights);
  c.weights = Eigen::Vector3d(0.2, 0.3, 0.5);
  const Trajectory traj = run_protocol(c, p);
  for (Index t = 0; t < 8; ++t) EXPECT_DOUBLE_EQ(traj.predictions[t], c.weights->dot(p.controls.col(t)));
}

TEST(Strategy, DimensionMismatchThrows) {
  auto s = make_strategy(config_of(StrategyKind::ftl), 3, 5);
  EXPECT_THROW(s->predict(Eigen::VectorXd::Zero(2)), Error);
  EXPECT_THROW(s->update(0.0, Eigen::VectorXd::Zero(4)), Error);
}

TEST(Strategy, InvalidConfigsAreRejected) {
  StrategyConfig fixed = config_of(StrategyKind::fixed_weights);
  EXPECT_THROW(validate(fixed, 3, 5), Error);
  fixed.weights = Eigen::Vector3d(0.5, 0.5, 0.5);
  EXPECT_THROW(validate(fixed, 3, 5), Error);
  StrategyConfig weighted = config_of(StrategyKind::weighted_ftl);
  weighted.timing = Eigen::VectorXd::Constant(4, 0.25);
  EXPECT_THROW(validate(weighted, 3, 5), Error);
  StrategyConfig ftrl = config_of(StrategyKind::ftrl);
  ftrl.eta = -1.0;
  EXPECT_THROW(validate(ftrl, 3, 5), Error);
}

TEST(Strategy, WeightedFtlMatchesWeightedOracle) {
  const Panel p = oracle::random_panel(34, 3, 10);
  std::mt19937_64 gen(34);
  const Eigen::VectorXd pi = oracle::random_simplex_point(gen, 10);
  StrategyConfig c = config_of(StrategyKind::weighted_ftl);
  c.timing = pi;
  const Trajectory traj = run_protocol(c, p);
  for (Index t = 2; t < 10; ++t) {
    const Eigen::VectorXd sw = pi.head(t).cwiseSqrt();
    Eigen::VectorXd theta;
    const double best =
        oracle::simplex_ls_min(p.treated.head(t).cwiseProduct(sw), p.controls.leftCols(t) * sw.asDiagonal(), &theta);
    const Eigen::VectorXd& ours = traj.weights[static_cast<std::size_t>(t)].theta;
    const double got =
        (p.treated.head(t).cwiseProduct(sw) - (p.controls.leftCols(t) * sw.asDiagonal()).transpose() * ours)
            .squaredNorm();
    EXPECT_NEAR(got, best, 1e-8);
  }
}

TEST(Strategy, DifferencedScMatchesHistoricalDiffOracle) {
  const Panel p = oracle::random_panel(35, 3, 10);
  const TransformedPanel h = historical_diff(p);
  const Trajectory traj = run_protocol(config_of(StrategyKind::differenced_sc), p);
  for (Index t = 3; t < 10; ++t) {
    Eigen::VectorXd theta;
    oracle::simplex_ls_min(h.values.treated.head(t), h.values.controls.leftCols(t), &theta);
    const double expected = h.to_level(t, theta.dot(h.values.controls.col(t)));
    EXPECT_NEAR(traj.predictions[t], expected, 1e-5) << "t=" << t;
  }
}

TEST(Strategy, DemeanedScEqualsLeaderOnDemeanedData) {
  // Small outcome range keeps the intercept strictly inside its box.
  Panel p = oracle::random_panel(36, 3, 12);
  p.treated *= 0.5;
  const Trajectory traj = run_protocol(config_of(StrategyKind::demeaned_sc), p);
  for (Index t = 4; t < 12; ++t) {
    const Eigen::MatrixXd Y = p.controls.leftCols(t);
    const Eigen::VectorXd y0 = p.treated.head(t);
    const Eigen::VectorXd ybar = Y.rowwise().mean();
    const double y0bar = y0.mean();
    Eigen::VectorXd theta;
    oracle::simplex_ls_min(y0.array() - y0bar, Y.colwise() - ybar, &theta);
    const double expected = y0bar + theta.dot(p.controls.col(t) - ybar);
    EXPECT_NEAR(traj.predictions[t], expected, 1e-5) << "t=" << t;
  }
}

TEST(Strategy, FirstDiffScUsesPreviousLevel) {
  const Panel p = oracle::random_panel(37, 2, 8);
  const TransformedPanel f = first_diff(p);
  const Trajectory traj = run_protocol(config_of(StrategyKind::first_diff_sc), p);
  EXPECT_NEAR(traj.predictions[0], p.controls.col(0).mean(), 1e-12);
  for (Index t = 2; t < 8; ++t) {
    Eigen::VectorXd theta;
    oracle::simplex_ls_min(f.values.treated.head(t), f.values.controls.leftCols(t), &theta);
    const double expected = p.treated[t - 1] + theta.dot(p.controls.col(t) - p.controls.col(t - 1));
    EXPECT_NEAR(traj.predictions[t], expected, 1e-5);
  }
}

TEST(Strategy, UniformDidIsTwoWayFixedEffects) {
  const Panel p = oracle::random_panel(38, 4, 9);
  const Trajectory traj = run_protocol(config_of(StrategyKind::uniform_did), p);
  const Eigen::VectorXd w = Eigen::VectorXd::Constant(4, 0.25);
  for (Index t = 1; t < 9; ++t) {
    const double expected = oracle::twfe_dummy_regression(p.treated.head(t), p.controls.leftCols(t),
                                                           p.controls.col(t), w, p.treated[t]);
    EXPECT_NEAR(traj.predictions[t], expected, 1e-10);
  }
}

TEST(Twfe, ClosedFormRegressionAndDummyOracleAgree) {
  std::mt19937_64 gen(39);
  for (int rep = 0; rep < 30; ++rep) {
    const Index N = 1 + rep % 5;
    const Index S = 2 + rep % 7;
    const Panel p = oracle::random_panel(100 + rep, N, S);
    Weights w;
    w.theta = oracle::random_simplex_point(gen, N);
    if (N > 2 && rep % 3 == 0) {
      w.theta[0] = 0.0;
      w.theta /= w.theta.sum();
    }
    const auto past0 = p.treated.head(S - 1);
    const auto past = p.controls.leftCols(S - 1);
    const auto now = p.controls.col(S - 1);
    const double closed = twfe_predict(past0, past, now, w);
    const double regression = twfe_predict_regression(past0, past, now, w);
    const double oracle = oracle::twfe_dummy_regression(past0, past, now, w.theta, p.treated[S - 1]);
    EXPECT_NEAR(closed, regression, 1e-10);
    EXPECT_NEAR(closed, oracle, 1e-10);
  }
}

TEST(Flh, ProbabilitiesStayOnTheSimplex) {
  FlhWeights f(0.25);
  std::mt19937_64 gen(40);
  for (int t = 0; t < 50; ++t) {
    const Eigen::VectorXd losses = oracle::uniform_matrix(gen, f.size(), 1, 0.0, 4.0).col(0);
    f.step(losses);
    const Eigen::VectorXd p = f.probs();
    // One expert exists before the first step and each step adds one.
    ASSERT_EQ(p.size(), t + 2);
    EXPECT_NEAR(p.sum(), 1.0, 1e-12);
    EXPECT_GE(p.minCoeff(), 0.0);
    EXPECT_NEAR(p[t + 1], 1.0 / (t + 2), 1e-12);
  }
}

TEST(Flh, StepMatchesDirectFormula) {
  FlhWeights f(0.5);
  EXPECT_EQ(f.size(), 1);
  f.step(Eigen::VectorXd::Constant(1, 1.0));
  Eigen::VectorXd losses(2);
  losses << 0.2, 1.5;
  const Eigen::VectorXd before = f.probs();
  f.step(losses);
  Eigen::VectorXd v = before.array() * (-0.5 * losses.array()).exp();
  v /= v.sum();
  const Eigen::VectorXd p = f.probs();
  EXPECT_NEAR(p[0], v[0] * 2.0 / 3.0, 1e-14);
  EXPECT_NEAR(p[1], v[1] * 2.0 / 3.0, 1e-14);
  EXPECT_NEAR(p[2], 1.0 / 3.0, 1e-14);
}

TEST(Flh, StrategyExposesWeightsAndTracksExperts) {
  const Panel p = oracle::random_panel(41, 3, 20);
  auto s = make_strategy(config_of(StrategyKind::flh), 3, 20);
  for (Index t = 0; t < 20; ++t) {
    const Prediction pred = s->predict(p.controls.col(t));
    EXPECT_TRUE(is_feasible(pred.weights));
    s->update(p.treated[t], p.controls.col(t));
    const Eigen::VectorXd probs = flh_weights(*s).probs();
    EXPECT_NEAR(probs.sum(), 1.0, 1e-12);
    EXPECT_GE(probs.minCoeff(), 0.0);
  }
  auto ftl = make_strategy(config_of(StrategyKind::ftl), 3, 20);
  EXPECT_THROW(flh_weights(*ftl), Error);
}

TEST(Adversary, FixedResponseForcesLoss) {
  Weights theta;
  theta.theta = Eigen::Vector3d(0.6, 0.3, 0.1);
  const Panel p = fixed_adversary_response(theta, 5e-5, 40);
  EXPECT_LE(p.max_abs(), 1.0);
  double fixed_loss = 0.0;
  for (Index t = 0; t < 40; ++t) fixed_loss += std::pow(p.treated[t] - theta.predict(p.controls.col(t)), 2);
  EXPECT_GE(fixed_loss, 5e-5 * 40);
  const OracleResult best = oracle_fixed_weights(p, ComparatorClass::simplex);
  EXPECT_LT(best.total_loss, 1e-12);
}
