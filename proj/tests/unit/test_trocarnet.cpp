#include "hforce/excite.hpp"
#include "hforce/presets.hpp"
#include "hforce/simplant.hpp"
#include "hforce/trocarnet.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

namespace hforce {
namespace {

CorrectionNet zero_net(int d_in, int hidden, double b2) {
  std::mt19937_64 rng(0);
  CorrectionNet net(d_in, hidden, rng);
  net.w1.setZero();
  net.b1.setZero();
  net.w2.setZero();
  net.b2 = b2;
  return net;
}

JointSamples random_samples(int d_in, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  JointSamples s;
  s.x = MatrixXd::NullaryExpr(d_in, n, [&] { return g(rng); });
  s.y = VectorXd::NullaryExpr(n, [&] { return g(rng); });
  return s;
}

TEST(CorrectionNet, ShapesFollowTheWindow) {
  EXPECT_EQ(trocar_input_size(5, 6), 61);
  std::mt19937_64 rng(1);
  const CorrectionNet net(61, 256, rng);
  EXPECT_EQ(net.w1.rows(), 256);
  EXPECT_EQ(net.w1.cols(), 61);
  EXPECT_EQ(net.b2, 0.0);
  EXPECT_LE(net.w1.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(61.0));
  EXPECT_LE(net.w2.cwiseAbs().maxCoeff(), 1.0 / 16.0);
  EXPECT_THROW(net.forward(VectorXd::Zero(60)), Error);
}

TEST(CorrectionNet, ZeroNetworkOutputsItsBias) {
  const CorrectionNet net = zero_net(7, 4, 2.5);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 10.0);
  for (int k = 0; k < 10; ++k) EXPECT_EQ(net.forward(VectorXd::NullaryExpr(7, [&] { return g(rng); })), 2.5);
}

TEST(CorrectionNet, ClosedReluGateOutputsItsBias) {
  std::mt19937_64 rng(3);
  CorrectionNet net(7, 16, rng);
  net.w2.setOnes();
  net.b1.setConstant(-1e9);
  net.b2 = -0.7;
  EXPECT_EQ(net.forward(VectorXd::Ones(7)), -0.7);
}

TEST(CorrectionNet, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  CorrectionNet net(6, 8, rng);
  net.b2 = 0.3;
  net.in_mean = VectorXd::LinSpaced(6, -0.5, 0.5);
  net.in_std = VectorXd::LinSpaced(6, 0.5, 2.0);
  const JointSamples s = random_samples(6, 5, 5);
  NetGradient g;
  mse_loss(net, s.x, s.y, &g);

  const double h = 1e-5;
  double worst = 0.0;
  auto check = [&](double& p, double analytic) {
    const double keep = p;
    p = keep + h;
    const double up = mse_loss(net, s.x, s.y);
    p = keep - h;
    const double down = mse_loss(net, s.x, s.y);
    p = keep;
    const double fd = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - analytic) / std::max(std::abs(fd) + std::abs(analytic), 1e-6));
  };
  for (Eigen::Index k = 0; k < net.w1.size(); ++k) check(net.w1.data()[k], g.w1.data()[k]);
  for (Eigen::Index k = 0; k < net.b1.size(); ++k) check(net.b1(k), g.b1(k));
  for (Eigen::Index k = 0; k < net.w2.size(); ++k) check(net.w2(k), g.w2(k));
  check(net.b2, g.b2);
  EXPECT_LT(worst, 1e-4);
}

TEST(TrainNet, LearnsAConstantTarget) {
  JointSamples s = random_samples(9, 2000, 6);
  s.y.setConstant(3.0);
  TrainConfig cfg;
  cfg.epochs = 100;
  cfg.lr = 3e-3;
  cfg.batch = 200;
  cfg.hidden = 32;
  cfg.patience = 5;
  TrainHistory h;
  const CorrectionNet net = train_net(s, cfg, h);
  ASSERT_EQ(h.val_loss.size(), 100u);
  EXPECT_LT(h.val_loss.back(), 1e-4);
  EXPECT_NEAR(net.forward(s.x.col(0)), 3.0, 1e-2);
  for (std::size_t e = h.train_loss.size() - 50; e < h.train_loss.size(); ++e) {
    EXPECT_LE(h.train_loss[e], h.train_loss[e - 1] * (1.0 + 1e-9));
  }
}

TEST(TrainNet, PlateauHalvesTheLearningRate) {
  JointSamples s = random_samples(4, 100, 7);  // pure noise: validation cannot improve for long
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.lr = 1e-2;
  cfg.batch = 16;
  cfg.hidden = 8;
  TrainHistory h;
  train_net(s, cfg, h);
  EXPECT_LT(h.lr.back(), cfg.lr);
  for (std::size_t e = 1; e < h.lr.size(); ++e) {
    EXPECT_TRUE(h.lr[e] == h.lr[e - 1] || h.lr[e] == 0.5 * h.lr[e - 1]);
  }
}

TEST(TrainNet, DeterministicInSeed) {
  const JointSamples s = random_samples(5, 120, 8);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.lr = 1e-3;
  cfg.batch = 32;
  cfg.hidden = 16;
  TrainHistory ha, hb, hc;
  const CorrectionNet a = train_net(s, cfg, ha);
  const CorrectionNet b = train_net(s, cfg, hb);
  EXPECT_EQ(ha.train_loss, hb.train_loss);
  EXPECT_EQ(a.w1, b.w1);
  cfg.seed = 1;
  train_net(s, cfg, hc);
  EXPECT_NE(ha.train_loss.back(), hc.train_loss.back());
}

TEST(TrainNet, NormalisationUsesOnlyTheTrainingSplit) {
  const JointSamples s = random_samples(5, 100, 9);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch = 100;
  cfg.hidden = 4;
  TrainHistory h;
  const CorrectionNet net = train_net(s, cfg, h);
  const SplitIndices split = split_indices(100, cfg);
  EXPECT_EQ(split.train.size(), 80u);
  EXPECT_EQ(split.val.size(), 10u);
  EXPECT_EQ(split.test.size(), 10u);
  VectorXd mean, std;
  input_stats(s.x, split.train, mean, std);
  EXPECT_EQ(net.in_mean, mean);
  EXPECT_EQ(net.in_std, std);
  VectorXd vmean, vstd;
  input_stats(s.x, split.val, vmean, vstd);
  EXPECT_GT((vmean - mean).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(TrainNet, RejectsBadConfigs) {
  const JointSamples s = random_samples(3, 10, 10);
  TrainHistory h;
  TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(train_net(s, cfg, h), Error);
  cfg = TrainConfig{};
  cfg.val_frac = 0.3;
  EXPECT_THROW(train_net(s, cfg, h), Error);
  cfg = TrainConfig{};
  cfg.epochs = 2;
  JointSamples bad = s;
  bad.y(3) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(train_net(bad, cfg, h), Error);
}

// --- datasets and correction ------------------------------------------------------

struct FreeSpace {
  KinematicModel model = planar_chain({0.5, 0.4});
  PlantConfig cfg{model, DynamicParams(ParamLayout(model))};
  GeneratedData data;
  IdentifiedModel idm;

  FreeSpace() {
    std::mt19937_64 rng(11);
    cfg.delta = random_physical_params(model, rng);
    cfg.gains.kp = VectorXd::Constant(2, 60.0);
    cfg.gains.kd = VectorXd::Constant(2, 8.0);
    cfg.noise.tau_std = 0.005;
    const TrajectoryLimits lim = TrajectoryLimits::from_model(model, VectorXd::Constant(2, 2.0));
    const FourierTrajectory traj = random_feasible_trajectory(model, lim, 6, 0.18, 0.4, rng, 100);
    GenerateOptions go;
    go.duration = 2.0 * traj.period();
    go.seed = 3;
    data = generate_dataset(cfg, [&](double t) { return eval_trajectory(traj, t); }, go);
    idm = identify_ls(model, compute_base_reduction(model), data.log);
  }
};

const FreeSpace& free_space() {
  static const FreeSpace f;
  return f;
}

TEST(TrocarDataset, WindowLengthLogGivesOneSample) {
  const FreeSpace& f = free_space();
  IdentifyOptions raw;
  raw.fc = 0.0;
  const SampleLog log = f.data.log.slice(100, 105);
  const TrocarDataset ds = build_trocar_dataset({log}, f.idm, f.model, 5, raw);
  ASSERT_EQ(ds.joints.size(), 2u);
  EXPECT_EQ(ds.n_samples(), 1);
  EXPECT_EQ(ds.joints[0].x.rows(), trocar_input_size(5, 2));
  // The newest row is the current time index.
  EXPECT_EQ(ds.joints[0].x(4 * 2 + 1, 0), log.q(4, 1));
  EXPECT_EQ(ds.joints[1].x(5 * 2 + 4 * 2, 0), log.qd(4, 0));
  EXPECT_THROW(build_trocar_dataset({f.data.log.slice(0, 4)}, f.idm, f.model, 5, raw), Error);
}

TEST(TrocarDataset, SamplesDoNotCrossLogBoundaries) {
  const FreeSpace& f = free_space();
  const SampleLog a = f.data.log.slice(0, 300);
  const SampleLog b = f.data.log.slice(300, 600);
  const TrocarDataset both = build_trocar_dataset({a, b}, f.idm, f.model, 5);
  EXPECT_EQ(both.n_samples(), 2 * (300 - 4));
}

TEST(TrocarDataset, FreeSpaceTargetsLookLikeNoise) {
  const FreeSpace& f = free_space();
  const TrocarDataset ds = build_trocar_dataset({f.data.log}, f.idm, f.model, 5);
  for (const JointSamples& j : ds.joints) EXPECT_LT(j.y.cwiseAbs().mean(), 3.0 * 0.005);
}

TEST(Correct, ZeroNetworksLeaveTheEstimate) {
  TrocarModel tm;
  tm.window = 5;
  tm.nets = {zero_net(21, 4, 0.0), zero_net(21, 4, 0.0)};
  const MatrixXd q = MatrixXd::Random(5, 2), qd = MatrixXd::Random(5, 2);
  const VectorXd tau(Eigen::Vector2d(0.3, -0.1));
  EXPECT_EQ(correct(tm, q, qd, tau), tau);
  EXPECT_THROW(correct(tm, q.topRows(4), qd.topRows(4), tau), Error);
  tm.nets[1].b2 = 0.25;
  EXPECT_NEAR(correct(tm, q, qd, tau)(1), 0.15, 1e-15);
}

TEST(Correct, SeriesMatchesPointwise) {
  std::mt19937_64 rng(12);
  TrocarModel tm;
  tm.window = 3;
  tm.nets = {CorrectionNet(13, 8, rng), CorrectionNet(13, 8, rng)};
  const MatrixXd q = MatrixXd::Random(10, 2), qd = MatrixXd::Random(10, 2), tau = MatrixXd::Random(10, 2);
  const MatrixXd s = correct_series(tm, q, qd, tau);
  EXPECT_EQ(s.row(1), tau.row(1));
  for (int i = 2; i < 10; ++i) {
    const VectorXd c = correct(tm, q.middleRows(i - 2, 3), qd.middleRows(i - 2, 3), tau.row(i).transpose());
    EXPECT_LT((s.row(i).transpose() - c).cwiseAbs().maxCoeff(), 1e-12);
  }
}

}  // namespace
}  // namespace hforce
