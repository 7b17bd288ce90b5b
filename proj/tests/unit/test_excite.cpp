#include "hforce/excite.hpp"
#include "hforce/presets.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace hforce {
namespace {

FourierTrajectory random_traj(int n, int nh, double f_f, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  FourierTrajectory t = FourierTrajectory::constant(VectorXd::NullaryExpr(n, [&] { return g(rng); }), nh, f_f);
  t.a = MatrixXd::NullaryExpr(n, nh, [&] { return g(rng); });
  t.b = MatrixXd::NullaryExpr(n, nh, [&] { return g(rng); });
  return t;
}

TEST(EvalTrajectory, InitialValues) {
  std::mt19937_64 rng(1);
  const FourierTrajectory t = random_traj(3, 4, 0.3, rng);
  const JointState s = eval_trajectory(t, 0.0);
  const double w = 2.0 * std::numbers::pi * 0.3;
  for (int j = 0; j < 3; ++j) {
    double q = t.q_offset(j), qd = 0.0;
    for (int k = 0; k < 4; ++k) {
      q -= t.b(j, k) / ((k + 1) * w);
      qd += t.a(j, k);
    }
    EXPECT_NEAR(s.q(j), q, 1e-12);
    EXPECT_NEAR(s.qd(j), qd, 1e-12);
  }
}

TEST(EvalTrajectory, FundamentalFrequencyEntersDenominators) {
  FourierTrajectory t = FourierTrajectory::constant(VectorXd::Zero(1), 1, 0.18);
  t.a(0, 0) = 1.0;
  const double w = 2.0 * std::numbers::pi * 0.18;
  EXPECT_NEAR(eval_trajectory(t, 0.7).q(0), std::sin(w * 0.7) / w, 1e-14);
}

TEST(EvalTrajectory, Periodic) {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 20; ++k) {
    const FourierTrajectory t = random_traj(4, 6, 0.18, rng);
    const JointState a = eval_trajectory(t, 0.0);
    const JointState b = eval_trajectory(t, t.period());
    EXPECT_LT((a.q - b.q).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((a.qd - b.qd).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(EvalTrajectory, DerivativesMatchFiniteDifferences) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  const double h = 1e-6;
  for (int k = 0; k < 20; ++k) {
    const FourierTrajectory t = random_traj(3, 6, 0.18, rng);
    const double t0 = u(rng);
    const JointState s = eval_trajectory(t, t0);
    const JointState p = eval_trajectory(t, t0 + h);
    const JointState m = eval_trajectory(t, t0 - h);
    const VectorXd qd_fd = (p.q - m.q) / (2 * h);
    const VectorXd qdd_fd = (p.qd - m.qd) / (2 * h);
    EXPECT_LT((qd_fd - s.qd).cwiseAbs().maxCoeff(), 1e-6 * std::max(1.0, s.qd.cwiseAbs().maxCoeff()));
    EXPECT_LT((qdd_fd - s.qdd).cwiseAbs().maxCoeff(), 1e-6 * std::max(1.0, s.qdd.cwiseAbs().maxCoeff()));
  }
}

TEST(SampledRegressor, SampleCountAndShape) {
  EXPECT_EQ(samples_per_period(200.0, 0.18), 1112);
  const KinematicModel model = planar_chain({0.5, 0.4});
  const BaseReduction red = compute_base_reduction(model, 50, 1);
  std::mt19937_64 rng(4);
  const FourierTrajectory t = random_traj(2, 6, 0.18, rng);
  const MatrixXd w = sampled_base_regressor(model, red, t, 200.0);
  EXPECT_EQ(w.rows(), 2 * 1112);
  EXPECT_EQ(w.cols(), red.b);
}

TEST(SampledRegressor, UndersamplingRejected) {
  const KinematicModel model = planar_chain({0.5, 0.4});
  const BaseReduction red = compute_base_reduction(model, 50, 1);
  const FourierTrajectory t = FourierTrajectory::constant(VectorXd::Zero(2), 6, 1.0);
  EXPECT_THROW(sampled_base_regressor(model, red, t, 12.0), Error);
}

// A constant trajectory repeats one row block; the column space (and so the
// singular values up to sqrt(n_s)) is that of a single block.
TEST(SampledRegressor, ConstantTrajectoryMatchesSingleBlock) {
  const KinematicModel model = planar_chain({0.5, 0.4});
  const BaseReduction red = compute_base_reduction(model, 50, 1);
  const FourierTrajectory t = FourierTrajectory::constant(Eigen::Vector2d(0.3, -0.2), 6, 0.18);
  const MatrixXd w = sampled_base_regressor(model, red, t, 20.0);
  const MatrixXd one = reduce_regressor(red, regressor_row_block(model, eval_trajectory(t, 0.0)));
  const int ns = samples_per_period(20.0, 0.18);
  const VectorXd sw = Eigen::JacobiSVD<MatrixXd>(w).singularValues();
  const VectorXd s1 = Eigen::JacobiSVD<MatrixXd>(one).singularValues();
  for (int i = 0; i < s1.size(); ++i) EXPECT_NEAR(sw(i), std::sqrt(double(ns)) * s1(i), 1e-9 * sw(0));
  EXPECT_EQ(condition_number(w), condition_number(one));
}

TEST(OptimizeExcitation, BeatsRandomFeasibleMedian) {
  const KinematicModel model = planar_chain({0.5, 0.4});
  const BaseReduction red = compute_base_reduction(model, 100, 2);
  const TrajectoryLimits lim = TrajectoryLimits::from_model(model, VectorXd::Constant(2, 1.0));
  std::mt19937_64 rng(5);
  std::vector<double> conds;
  for (int k = 0; k < 50; ++k) {
    const FourierTrajectory t = random_feasible_trajectory(model, lim, 6, 0.18, 0.2, rng, 120);
    ASSERT_GE(constraint_margin(model, t, lim, 120), 0.0);
    conds.push_back(condition_number(sampled_base_regressor(model, red, t, 200.0)));
  }
  std::nth_element(conds.begin(), conds.begin() + 25, conds.end());
  ExciteOptions opts;
  opts.opt_sample_rate = 20.0;
  const ExciteResult res = optimize_excitation(model, red, lim, 6, 0.18, 7, 600, opts);
  EXPECT_LE(res.report.cond_after, 0.5 * conds[25]);
  EXPECT_LE(res.report.cond_after, res.report.cond_before);
  EXPECT_GE(res.report.constraint_margin, 0.0);
  EXPECT_GE(constraint_margin(model, res.traj, lim, 20 * 6), 0.0);
}

TEST(OptimizeExcitation, DeterministicForSeed) {
  const KinematicModel model = planar_chain({0.5, 0.4});
  const BaseReduction red = compute_base_reduction(model, 100, 2);
  const TrajectoryLimits lim = TrajectoryLimits::from_model(model, VectorXd::Constant(2, 1.0));
  ExciteOptions opts;
  opts.opt_sample_rate = 10.0;
  opts.n_starts = 2;
  const ExciteResult a = optimize_excitation(model, red, lim, 3, 0.18, 9, 100, opts);
  const ExciteResult b = optimize_excitation(model, red, lim, 3, 0.18, 9, 100, opts);
  EXPECT_EQ(a.report.cond_after, b.report.cond_after);
  EXPECT_TRUE((a.traj.a - b.traj.a).isZero(0.0));
}

TEST(OptimizeExcitation, DegenerateLimitsGiveConstantTrajectory) {
  const KinematicModel model = planar_chain({0.5, 0.4});
  const BaseReduction red = compute_base_reduction(model, 100, 2);
  TrajectoryLimits lim = TrajectoryLimits::from_model(model, VectorXd::Constant(2, 1.0));
  lim.q_min = Eigen::Vector2d(0.3, 0.1);
  lim.q_max = lim.q_min;
  ExciteOptions opts;
  opts.opt_sample_rate = 10.0;
  opts.n_starts = 2;
  const ExciteResult res = optimize_excitation(model, red, lim, 2, 0.18, 3, 50, opts);
  EXPECT_TRUE(res.traj.a.isZero(0.0));
  EXPECT_TRUE(res.traj.b.isZero(0.0));
  EXPECT_TRUE((res.traj.q_offset - lim.q_min).isZero(0.0));
  EXPECT_EQ(res.report.constraint_margin, 0.0);
}

TEST(ConstraintMargin, CartesianBoxViolationIsNegative) {
  const KinematicModel model = planar_chain({1.0, 1.0});
  TrajectoryLimits lim = TrajectoryLimits::from_model(model, VectorXd::Constant(2, 1.0));
  lim.use_cart = true;
  lim.cart_min = Vec3(-3, -3, -1);
  lim.cart_max = Vec3(1.5, 3, 1);
  const FourierTrajectory t = FourierTrajectory::constant(VectorXd::Zero(2), 1, 0.5);
  // Straight arm puts the tip at x = 2, outside the box.
  EXPECT_LT(constraint_margin(model, t, lim, 10), 0.0);
  lim.cart_max.x() = 2.5;
  EXPECT_GT(constraint_margin(model, t, lim, 10), 0.0);
}

}  // namespace
}  // namespace hforce
