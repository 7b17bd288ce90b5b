#include "hforce/excite.hpp"
#include "hforce/presets.hpp"
#include "hforce/sysid.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

namespace hforce {
namespace {

constexpr double kPi = std::numbers::pi;

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorKind::kInvalidArgument;
}

// Exact log of a trajectory through the true inverse dynamics.
SampleLog analytic_log(const KinematicModel& model, const DynamicParams& delta,
                       const FourierTrajectory& traj, double duration, double rate) {
  const int ns = static_cast<int>(std::floor(duration * rate));
  const int n = model.n_joints();
  SampleLog log;
  log.t.resize(ns);
  log.q.resize(ns, n);
  log.qd.resize(ns, n);
  log.qdd.resize(ns, n);
  log.tau.resize(ns, n);
  for (int i = 0; i < ns; ++i) {
    log.t(i) = i / rate;
    const JointState s = eval_trajectory(traj, log.t(i));
    log.q.row(i) = s.q.transpose();
    log.qd.row(i) = s.qd.transpose();
    log.qdd.row(i) = s.qdd.transpose();
    log.tau.row(i) = inverse_dynamics(model, delta, s).transpose();
  }
  return log;
}

void add_relative_noise(SampleLog& log, double rel, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int j = 0; j < log.n_joints(); ++j) {
    const double rms = std::sqrt(log.tau.col(j).squaredNorm() / log.n_samples());
    for (int i = 0; i < log.n_samples(); ++i) log.tau(i, j) += rel * rms * g(rng);
  }
}

VectorXd nrmse_per_joint(const MatrixXd& est, const MatrixXd& ref) {
  VectorXd out(ref.cols());
  for (Eigen::Index j = 0; j < ref.cols(); ++j) {
    const double rmse = std::sqrt((est.col(j) - ref.col(j)).squaredNorm() / ref.rows());
    out(j) = rmse / (ref.col(j).maxCoeff() - ref.col(j).minCoeff());
  }
  return out;
}

struct Chain2 {
  KinematicModel model = planar_chain({0.5, 0.4});
  DynamicParams truth{ParamLayout(model)};
  BaseReduction red;
  FourierTrajectory train, test;

  Chain2() {
    std::mt19937_64 rng(11);
    truth = random_physical_params(model, rng);
    red = compute_base_reduction(model, 200, 0);
    const TrajectoryLimits lim = TrajectoryLimits::from_model(model, VectorXd::Constant(2, 3.0));
    train = random_feasible_trajectory(model, lim, 6, 0.18, 0.5, rng, 120);
    test = random_feasible_trajectory(model, lim, 6, 0.18, 0.5, rng, 120);
  }
};

const Chain2& chain2() {
  static const Chain2 c;
  return c;
}

// --- filtering and differentiation ---------------------------------------------

TEST(Lowpass, DcPassesUnchanged) {
  const VectorXd x = VectorXd::Constant(400, 3.0);
  EXPECT_LT((lowpass_filter(x, 200.0, 10.0) - x).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Lowpass, SineFarAboveCutoffIsRemoved) {
  const double fs = 200.0, fc = 10.0;
  // Whole periods, so both ends sit at zero: odd padding pins each end to its input value.
  VectorXd x(1001);
  for (int i = 0; i < x.size(); ++i) x(i) = std::sin(2.0 * kPi * 4.0 * fc * i / fs);
  const double rms_in = std::sqrt(x.squaredNorm() / x.size());
  const VectorXd y = lowpass_filter(x, fs, fc);
  EXPECT_LE(std::sqrt(y.squaredNorm() / y.size()), 0.01 * rms_in);
}

TEST(Lowpass, ZeroPhaseKeepsPulsePeak) {
  VectorXd x(401);
  for (int i = 0; i < x.size(); ++i) x(i) = std::exp(-0.5 * std::pow((i - 200) / 8.0, 2));
  Eigen::Index peak = 0;
  lowpass_filter(x, 200.0, 10.0).maxCoeff(&peak);
  EXPECT_EQ(peak, 200);
}

TEST(Lowpass, Linear) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  const VectorXd a = VectorXd::NullaryExpr(300, [&] { return g(rng); });
  const VectorXd b = VectorXd::NullaryExpr(300, [&] { return g(rng); });
  const VectorXd lhs = lowpass_filter(2.0 * a - 3.0 * b, 200.0, 10.0);
  const VectorXd rhs = 2.0 * lowpass_filter(a, 200.0, 10.0) - 3.0 * lowpass_filter(b, 200.0, 10.0);
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Lowpass, RejectsShortSignalsAndBadCutoffs) {
  EXPECT_THROW(lowpass_filter(VectorXd::Zero(10), 200.0, 10.0), Error);
  EXPECT_THROW(lowpass_filter(VectorXd::Zero(100), 200.0, 0.0), Error);
  EXPECT_THROW(lowpass_filter(VectorXd::Zero(100), 200.0, 100.0), Error);
}

TEST(Differentiate, ExactOnLinearSignals) {
  const VectorXd t = VectorXd::LinSpaced(50, 0.0, 0.49);
  const VectorXd x = 3.0 * t.array() - 1.0;
  EXPECT_LT((differentiate(x, t).array() - 3.0).abs().maxCoeff(), 1e-10);
  EXPECT_LT(differentiate(VectorXd::Constant(50, 2.0), t).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Differentiate, SineTruncationError) {
  const double dt = 0.005, w = 2.0 * kPi * 1.5;
  const int n = 400;
  VectorXd t(n), x(n);
  for (int i = 0; i < n; ++i) {
    t(i) = i * dt;
    x(i) = std::sin(w * t(i));
  }
  const VectorXd d = differentiate(x, t);
  const double w3 = w * w * w;
  for (int i = 1; i + 1 < n; ++i) {
    EXPECT_LT(std::abs(d(i) - w * std::cos(w * t(i))), 1.1 * w3 * dt * dt / 6.0);
  }
  EXPECT_LT(std::abs(d(0) - w), w3 * dt * dt / 3.0 * 1.1);
  EXPECT_LT(std::abs(d(n - 1) - w * std::cos(w * t(n - 1))), w3 * dt * dt / 3.0 * 1.1);
}

TEST(Differentiate, NeedsThreeSamples) {
  EXPECT_THROW(differentiate(VectorXd::Zero(2), VectorXd::LinSpaced(2, 0.0, 1.0)), Error);
}

TEST(UniformRate, RejectsJitter) {
  VectorXd t = VectorXd::LinSpaced(100, 0.0, 0.99);
  EXPECT_NEAR(uniform_rate(t), 100.0, 1e-9);
  t(50) += 0.002;
  EXPECT_THROW(uniform_rate(t), Error);
}

// --- least squares --------------------------------------------------------------

TEST(IdentifyLs, RecoversBaseParametersFromExactData) {
  const Chain2& c = chain2();
  const SampleLog log = analytic_log(c.model, c.truth, c.train, 2.0 * c.train.period(), 200.0);
  IdentifyOptions opts;
  opts.fc = 0.0;
  const IdentifiedModel idm = identify_ls(c.model, c.red, log, opts);
  const VectorXd truth_b = base_params(c.red, c.truth.values());
  EXPECT_LT((idm.delta_b - truth_b).cwiseAbs().maxCoeff() / truth_b.cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_EQ(idm.report.mode, "unconstrained");
  EXPECT_TRUE(std::isfinite(idm.report.cond));
}

TEST(IdentifyLs, ConstantTorqueChannelIsADataError) {
  const Chain2& c = chain2();
  SampleLog log = analytic_log(c.model, c.truth, c.train, c.train.period(), 200.0);
  log.tau.col(1).setConstant(0.4);
  IdentifyOptions opts;
  opts.fc = 0.0;
  EXPECT_EQ(kind_of([&] { identify_ls(c.model, c.red, log, opts); }), ErrorKind::kData);
}

TEST(IdentifyLs, RankDeficientDataIsADataError) {
  const Chain2& c = chain2();
  // A motionless log only excites the static columns.
  SampleLog log = analytic_log(c.model, c.truth, FourierTrajectory::constant(VectorXd::Constant(2, 0.3), 6, 0.18),
                               5.0, 200.0);
  log.tau.col(0).array() += VectorXd::LinSpaced(log.n_samples(), 0.0, 1.0).array();
  log.tau.col(1).array() += VectorXd::LinSpaced(log.n_samples(), 0.0, 1.0).array();
  IdentifyOptions opts;
  opts.fc = 0.0;
  EXPECT_EQ(kind_of([&] { identify_ls(c.model, c.red, log, opts); }), ErrorKind::kData);
}

TEST(SolveWeightedLs, ScalingOneJointLeavesSolutionUnchanged) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  const int n = 2, ns = 60, p = 5;
  const MatrixXd w = MatrixXd::NullaryExpr(n * ns, p, [&] { return g(rng); });
  const VectorXd tau = VectorXd::NullaryExpr(n * ns, [&] { return g(rng); });
  MatrixXd w2 = w;
  VectorXd tau2 = tau;
  for (int i = 0; i < ns; ++i) {
    w2.row(i * n) *= 10.0;
    tau2(i * n) *= 10.0;
  }
  const WeightedLsResult a = solve_weighted_ls(w, tau, n);
  const WeightedLsResult b = solve_weighted_ls(w2, tau2, n);
  EXPECT_LT((a.x - b.x).cwiseAbs().maxCoeff(), 1e-9 * a.x.cwiseAbs().maxCoeff());
  EXPECT_NEAR(b.weights(0), a.weights(0) / 10.0, 1e-12);
}

TEST(SolveWeightedLs, SolutionIsAMinimum) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 1.0);
  const int n = 3, ns = 40, p = 6;
  const MatrixXd w = MatrixXd::NullaryExpr(n * ns, p, [&] { return g(rng); });
  const VectorXd tau = VectorXd::NullaryExpr(n * ns, [&] { return g(rng); });
  const WeightedLsResult r = solve_weighted_ls(w, tau, n);
  VectorXd rw(n * ns);
  for (int i = 0; i < n * ns; ++i) rw(i) = r.weights(i % n);
  auto cost = [&](const VectorXd& x) { return (rw.asDiagonal() * (w * x - tau)).squaredNorm(); };
  const double best = cost(r.x);
  for (int k = 0; k < 100; ++k) {
    const VectorXd dx = 1e-3 * VectorXd::NullaryExpr(p, [&] { return g(rng); });
    EXPECT_GE(cost(r.x + dx), best);
  }
}

TEST(PredictTorque, ZeroParametersGiveZeroTorque) {
  const Chain2& c = chain2();
  IdentifiedModel idm;
  idm.reduction = c.red;
  idm.delta_b = VectorXd::Zero(c.red.b);
  const JointState s{VectorXd::Constant(2, 0.3), VectorXd::Constant(2, -0.2), VectorXd::Constant(2, 1.0)};
  EXPECT_EQ(predict_torque(idm, c.model, s).cwiseAbs().maxCoeff(), 0.0);
}

TEST(IdentifyLs, HeldOutPredictionNoiseless) {
  const Chain2& c = chain2();
  const SampleLog train = analytic_log(c.model, c.truth, c.train, 2.0 * c.train.period(), 200.0);
  const SampleLog test = analytic_log(c.model, c.truth, c.test, c.test.period(), 200.0);
  const IdentifiedModel idm = identify_ls(c.model, c.red, train);
  const PreparedLog p = preprocess(test, IdentifyOptions{});
  const VectorXd e = nrmse_per_joint(predict_series(idm, c.model, p.q, p.qd, p.qdd), test.tau);
  EXPECT_LT(e.maxCoeff(), 0.02) << e.transpose();
}

TEST(IdentifyLs, HeldOutPredictionWithTorqueNoise) {
  const Chain2& c = chain2();
  SampleLog train = analytic_log(c.model, c.truth, c.train, 2.0 * c.train.period(), 200.0);
  add_relative_noise(train, 0.01, 7);
  const SampleLog test = analytic_log(c.model, c.truth, c.test, c.test.period(), 200.0);
  const IdentifiedModel idm = identify_ls(c.model, c.red, train);
  const PreparedLog p = preprocess(test, IdentifyOptions{});
  const VectorXd e = nrmse_per_joint(predict_series(idm, c.model, p.q, p.qd, p.qdd), test.tau);
  EXPECT_LT(e.maxCoeff(), 0.05) << e.transpose();
}

TEST(IdentifyLs, Deterministic) {
  const Chain2& c = chain2();
  SampleLog log = analytic_log(c.model, c.truth, c.train, c.train.period(), 200.0);
  add_relative_noise(log, 0.01, 8);
  const IdentifiedModel a = identify_ls(c.model, c.red, log);
  const IdentifiedModel b = identify_ls(c.model, c.red, log);
  EXPECT_EQ(a.delta_b, b.delta_b);
}

// --- feasible fit ---------------------------------------------------------------

TEST(IdentifyFeasible, MatchesLeastSquaresOnExactData) {
  const Chain2& c = chain2();
  const SampleLog log = analytic_log(c.model, c.truth, c.train, 2.0 * c.train.period(), 200.0);
  IdentifyOptions opts;
  opts.fc = 0.0;
  const IdentifiedModel ls = identify_ls(c.model, c.red, log, opts);
  const IdentifiedModel fe = identify_feasible(c.model, c.red, log, opts);
  EXPECT_EQ(fe.report.mode, "feasible");
  EXPECT_TRUE(feasibility_check(DynamicParams(ParamLayout(c.model), fe.delta)).feasible);
  const double rms_ls = ls.report.residual_rms.norm();
  const double rms_fe = fe.report.residual_rms.norm();
  EXPECT_LT(std::abs(rms_fe - rms_ls), 1e-6);
}

TEST(IdentifyFeasible, NoisyFitIsPhysicalAndMonotone) {
  const Chain2& c = chain2();
  SampleLog log = analytic_log(c.model, c.truth, c.train, c.train.period(), 200.0);
  add_relative_noise(log, 0.01, 9);
  const IdentifiedModel ls = identify_ls(c.model, c.red, log);
  const IdentifiedModel fe = identify_feasible(c.model, c.red, log);
  const ParamLayout lay(c.model);

  // The unconstrained solution spread onto the base columns is not physical.
  VectorXd scattered = VectorXd::Zero(lay.size());
  const auto cols = c.red.base_columns();
  for (int k = 0; k < c.red.b; ++k) scattered(cols[k]) = ls.delta_b(k);
  EXPECT_FALSE(feasibility_check(DynamicParams(lay, scattered)).feasible);

  const DynamicParams fit(lay, fe.delta);
  EXPECT_TRUE(feasibility_check(fit).feasible);
  for (int i = 0; i < c.model.n_links(); ++i) EXPECT_GE(fit.link(i).m, 1e-9);

  const auto& h = fe.report.objective_history;
  ASSERT_GE(h.size(), 2u);
  for (std::size_t i = 1; i < h.size(); ++i) EXPECT_LE(h[i], h[i - 1]);
}

}  // namespace
}  // namespace hforce
