#include "synthreg/simplex.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace synthreg;

namespace {

LeastSquaresStats stats_of(const Eigen::VectorXd& y0, const Eigen::MatrixXd& Y) {
  LeastSquaresStats s(Y.rows());
  for (Index t = 0; t < Y.cols(); ++t) s.add(y0[t], Y.col(t));
  return s;
}

}  // namespace

TEST(Projection, MatchesBisectionOracle) {
  std::mt19937_64 gen(11);
  for (int rep = 0; rep < 200; ++rep) {
    const Index n = 1 + rep % 7;
    const Eigen::VectorXd v = oracle::uniform_matrix(gen, n, 1, -3.0, 3.0).col(0);
    const Weights w = project_simplex(v);
    EXPECT_TRUE(is_feasible(w));
    EXPECT_LT((w.theta - oracle::bisect_projection(v)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Projection, FixesPointsOfTheSimplex) {
  std::mt19937_64 gen(2);
  const Eigen::VectorXd p = oracle::random_simplex_point(gen, 5);
  EXPECT_LT((project_simplex(p).theta - p).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(SimplexLs, EmptyHistoryGivesUniform) {
  const Solution s = solve_simplex_ls(LeastSquaresStats(4));
  EXPECT_EQ(s.weights.theta, Eigen::VectorXd::Constant(4, 0.25));
}

TEST(SimplexLs, MatchesFistaOracle) {
  std::mt19937_64 gen(5);
  for (int rep = 0; rep < 60; ++rep) {
    const Index N = 1 + rep % 6;
    const Index T = 1 + rep % 9;
    const Eigen::MatrixXd Y = oracle::uniform_matrix(gen, N, T);
    const Eigen::VectorXd y0 = oracle::uniform_matrix(gen, T, 1).col(0);
    const Solution s = solve_simplex_ls(stats_of(y0, Y));
    ASSERT_TRUE(is_feasible(s.weights));
    const double oracle = oracle::simplex_ls_min(y0, Y);
    const double ours = (y0 - Y.transpose() * s.weights.theta).squaredNorm();
    EXPECT_NEAR(ours, oracle, 1e-7) << "N=" << N << " T=" << T;
    EXPECT_LE(s.kkt_residual, kDefaultTolerance);
  }
}

TEST(SimplexLs, ExactFitIsRecovered) {
  std::mt19937_64 gen(8);
  const Eigen::MatrixXd Y = oracle::uniform_matrix(gen, 4, 30);
  Eigen::VectorXd theta(4);
  theta << 0.5, 0.0, 0.3, 0.2;
  const Solution s = solve_simplex_ls(stats_of(Y.transpose() * theta, Y));
  EXPECT_LT((s.weights.theta - theta).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(SimplexLs, TieBreakPicksMinimumNorm) {
  // Identical controls: every simplex point fits equally well.
  Eigen::MatrixXd Y(3, 5);
  for (Index t = 0; t < 5; ++t) Y.col(t).setConstant(0.1 * static_cast<double>(t) - 0.2);
  const Solution s = solve_simplex_ls(stats_of(Y.row(0).transpose(), Y));
  EXPECT_LT((s.weights.theta.array() - 1.0 / 3.0).abs().maxCoeff(), 1e-6);
}

TEST(SimplexLs, WarmStartDoesNotChangeTheAnswer) {
  std::mt19937_64 gen(9);
  const Eigen::MatrixXd Y = oracle::uniform_matrix(gen, 5, 12);
  const Eigen::VectorXd y0 = oracle::uniform_matrix(gen, 12, 1).col(0);
  const Solution cold = solve_simplex_ls(stats_of(y0, Y));
  SolveOptions opt;
  Weights start;
  start.theta = Eigen::VectorXd::Unit(5, 4);
  opt.warm_start = start;
  const Solution warm = solve_simplex_ls(stats_of(y0, Y), opt);
  EXPECT_LT((cold.weights.theta - warm.weights.theta).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(SimplexLs, GridBruteForceAgrees) {
  std::mt19937_64 gen(21);
  for (int rep = 0; rep < 20; ++rep) {
    const Index N = 2 + rep % 2;
    const Index T = 2 + rep % 6;
    const Eigen::MatrixXd Y = oracle::uniform_matrix(gen, N, T);
    const Eigen::VectorXd y0 = oracle::uniform_matrix(gen, T, 1).col(0);
    double best = std::numeric_limits<double>::infinity();
    oracle::for_each_grid_point(N, 400, [&](const Eigen::VectorXd& p) {
      best = std::min(best, (y0 - Y.transpose() * p).squaredNorm());
    });
    const Solution s = solve_simplex_ls(stats_of(y0, Y));
    const double ours = (y0 - Y.transpose() * s.weights.theta).squaredNorm();
    EXPECT_LE(ours, best + 1e-12);
    EXPECT_GE(ours, best - 1e-3);
  }
}

TEST(RidgeFtrl, InteriorSolutionMatchesLinearSystem) {
  // With a large ridge term the minimizer is interior and solves
  // (G + I/eta) theta = b + mu 1, 1'theta = 1.
  std::mt19937_64 gen(4);
  const Index N = 4;
  const Eigen::MatrixXd Y = oracle::uniform_matrix(gen, N, 6);
  const Eigen::VectorXd y0 = oracle::uniform_matrix(gen, 6, 1).col(0);
  const double eta = 0.05;
  SolveOptions opt;
  opt.loss_scale = 0.5;
  opt.penalty = PenaltySpec{PenaltyKind::ridge, eta, {}, {}, {}};
  const Solution s = solve_simplex_ls(stats_of(y0, Y), opt);

  const Eigen::MatrixXd G = 0.5 * 2.0 * Y * Y.transpose();
  const Eigen::VectorXd b = Y * y0;
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(N + 1, N + 1);
  K.topLeftCorner(N, N) = G + Eigen::MatrixXd::Identity(N, N) / eta;
  K.block(0, N, N, 1).setOnes();
  K.block(N, 0, 1, N).setOnes();
  Eigen::VectorXd rhs(N + 1);
  rhs << b, 1.0;
  const Eigen::VectorXd sol = K.fullPivLu().solve(rhs);
  ASSERT_GT(sol.head(N).minCoeff(), 0.0);
  EXPECT_LT((s.weights.theta - sol.head(N)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(EntropyFtrl, SatisfiesStationarity) {
  // Interior optimum: gradient of the objective is constant across coordinates.
  std::mt19937_64 gen(6);
  const Index N = 5;
  const Eigen::MatrixXd Y = oracle::uniform_matrix(gen, N, 10);
  const Eigen::VectorXd y0 = oracle::uniform_matrix(gen, 10, 1).col(0);
  SolveOptions opt;
  opt.loss_scale = 0.5;
  opt.penalty = PenaltySpec{PenaltyKind::entropy, 0.3, {}, {}, {}};
  const Solution s = solve_simplex_ls(stats_of(y0, Y), opt);
  const Eigen::VectorXd th = s.weights.theta;
  ASSERT_GT(th.minCoeff(), 0.0);
  const Eigen::VectorXd grad =
      -(Y * (y0 - Y.transpose() * th)) + ((th.array().log() + 1.0) / 0.3).matrix();
  EXPECT_LT(grad.maxCoeff() - grad.minCoeff(), 1e-6);
}

TEST(EntropyFtrl, EmptyHistoryIsUniform) {
  SolveOptions opt;
  opt.penalty = PenaltySpec{PenaltyKind::entropy, 0.5, {}, {}, {}};
  const Solution s = solve_simplex_ls(LeastSquaresStats(3), opt);
  EXPECT_LT((s.weights.theta.array() - 1.0 / 3.0).abs().maxCoeff(), 1e-9);
}

TEST(AbsoluteLoss, MatchesGridMinimum) {
  std::mt19937_64 gen(13);
  for (int rep = 0; rep < 10; ++rep) {
    const Index N = 2 + rep % 2;
    const Index T = 3 + rep;
    const Eigen::MatrixXd Y = oracle::uniform_matrix(gen, N, T);
    const Eigen::VectorXd y0 = oracle::uniform_matrix(gen, T, 1).col(0);
    const Eigen::VectorXd w = Eigen::VectorXd::Ones(T);
    SolveOptions opt;
    opt.penalty = PenaltySpec{PenaltyKind::ridge, 0.5, {}, {}, {}};
    const Solution s = solve_simplex_absolute(y0, Y, w, opt);
    auto f = [&](const Eigen::VectorXd& th) {
      return (y0 - Y.transpose() * th).cwiseAbs().sum() + 0.5 * th.squaredNorm() / 0.5;
    };
    double best = std::numeric_limits<double>::infinity();
    oracle::for_each_grid_point(N, 400, [&](const Eigen::VectorXd& p) { best = std::min(best, f(p)); });
    EXPECT_LE(f(s.weights.theta), best + 1e-6);
  }
}

TEST(AffineLs, InterceptAbsorbsConstantShift) {
  std::mt19937_64 gen(17);
  const Eigen::MatrixXd Y = oracle::uniform_matrix(gen, 3, 25, -0.5, 0.5);
  Eigen::VectorXd theta(3);
  theta << 0.2, 0.7, 0.1;
  const Eigen::VectorXd y0 = (Y.transpose() * theta).array() + 0.4;
  LeastSquaresStats s(4);
  Eigen::VectorXd z(4);
  for (Index t = 0; t < 25; ++t) {
    z << 1.0, Y.col(t);
    s.add(y0[t], z);
  }
  const Solution sol = solve_affine_ls(s);
  ASSERT_TRUE(sol.weights.intercept);
  EXPECT_NEAR(*sol.weights.intercept, 0.4, 1e-8);
  EXPECT_LT((sol.weights.theta - theta).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(AffineLs, InterceptIsBoxed) {
  Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(2, 4);
  const Eigen::VectorXd y0 = Eigen::VectorXd::Constant(4, 5.0);
  SolveSpec spec;
  spec.targets = y0;
  spec.regressors = Y;
  const Solution sol = solve_affine_ls(spec);
  EXPECT_DOUBLE_EQ(*sol.weights.intercept, kInterceptBound);
}

TEST(WeightedLs, SampleWeightsScaleEachPeriod) {
  std::mt19937_64 gen(23);
  const Eigen::MatrixXd Y = oracle::uniform_matrix(gen, 3, 6);
  const Eigen::VectorXd y0 = oracle::uniform_matrix(gen, 6, 1).col(0);
  Eigen::VectorXd w(6);
  w << 1, 2, 0.5, 3, 1, 0.25;
  SolveSpec spec;
  spec.targets = y0;
  spec.regressors = Y;
  spec.sample_weights = w;
  const Solution sol = solve_constrained_ls(spec);
  // Weighting by w equals duplicating rows scaled by sqrt(w).
  const Eigen::VectorXd sw = w.cwiseSqrt();
  const double oracle = oracle::simplex_ls_min(y0.cwiseProduct(sw), Y * sw.asDiagonal());
  EXPECT_NEAR(objective_value(spec, sol.weights), oracle, 1e-7);
}

TEST(Penalty, InvalidSpecsThrow) {
  EXPECT_THROW(validate(PenaltySpec{PenaltyKind::ridge, 0.0, {}, {}, {}}, 3), Error);
  PenaltySpec q{PenaltyKind::quadratic, 1.0, -Eigen::MatrixXd::Identity(3, 3), Eigen::MatrixXd::Identity(3, 3),
                Eigen::VectorXd::Zero(3)};
  EXPECT_THROW(validate(q, 3), Error);
  q.H = Eigen::MatrixXd::Identity(2, 2);
  EXPECT_THROW(validate(q, 3), Error);
}

TEST(Penalty, QuadraticNormalizationAndRange) {
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(2, 2) * 4.0;
  PenaltySpec q{PenaltyKind::quadratic, 1.0, H, Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2)};
  const PenaltySpec n = normalize_quadratic(q);
  const Eigen::MatrixXd M = n.X.transpose() * n.H * n.X;
  EXPECT_NEAR(M.selfadjointView<Eigen::Lower>().eigenvalues().minCoeff(), 1.0, 1e-12);
  // Phi = |theta|^2 / 2 on the simplex ranges from 1/(2N) to 1/2.
  EXPECT_NEAR(penalty_range(n, 2), 0.5 - 0.25, 1e-9);
  EXPECT_NEAR(penalty_range(PenaltySpec{PenaltyKind::entropy, 1.0, {}, {}, {}}, 4), std::log(4.0), 1e-12);
}

TEST(Penalty, DefaultEtaValues) {
  EXPECT_DOUBLE_EQ(default_eta(PenaltyKind::ridge, 5, 100), 1.0 / std::sqrt(4.0 * 5 * 100));
  EXPECT_DOUBLE_EQ(default_eta(PenaltyKind::entropy, 8, 100), std::sqrt(std::log(8.0) / 100));
}

TEST(Solver, IterationCapRaisesConvergenceError) {
  std::mt19937_64 gen(29);
  const Eigen::MatrixXd Y = oracle::uniform_matrix(gen, 8, 20);
  const Eigen::VectorXd y0 = oracle::uniform_matrix(gen, 20, 1).col(0);
  SolveOptions opt;
  opt.penalty = PenaltySpec{PenaltyKind::entropy, 10.0, {}, {}, {}};
  opt.max_iters = 1;
  try {
    solve_simplex_ls(stats_of(y0, Y), opt);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::non_convergence);
    EXPECT_GT(e.kkt_residual(), kDefaultTolerance);
    EXPECT_EQ(e.last_iterate().theta.size(), 8);
  }
}
