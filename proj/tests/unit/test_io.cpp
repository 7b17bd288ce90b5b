#include "hforce/io.hpp"
#include "hforce/presets.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace hforce {
namespace {

namespace fs = std::filesystem;
using io::Json;

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hforce_test_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TEST(Files, Sha256KnownVectors) {
  EXPECT_EQ(io::sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(io::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Files, DoublesRoundTripThroughText) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1e3);
  for (int k = 0; k < 1000; ++k) {
    const double v = g(rng) * std::pow(10.0, k % 40 - 20);
    EXPECT_EQ(std::stod(io::format_double(v)), v);
  }
  EXPECT_EQ(io::format_double(0.5), "0.5");
}

TEST(Model, PresetsRoundTrip) {
  for (const KinematicModel& m : {rcm6_preset(), psm_preset(), planar_chain({0.5, 0.4})}) {
    const KinematicModel back = io::model_from_json(Json::parse(io::to_json(m).dump()));
    EXPECT_EQ(io::to_json(back), io::to_json(m)) << m.name();
    VectorXd q = 0.5 * (m.q_min() + m.q_max());
    q(0) += 0.1;
    EXPECT_LT((tip_position(back, q) - tip_position(m, q)).norm(), 1e-15);
  }
}

TEST(Model, SchemaViolationsAreConfigErrors) {
  Json j = io::to_json(rcm6_preset());
  j["frames"][2]["joint_kind"] = "helical";
  try {
    io::model_from_json(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }
  Json k = io::to_json(rcm6_preset());
  k.erase("n_joints");
  EXPECT_THROW(io::model_from_json(k), Error);
}

TEST(Params, NamedValuesRoundTrip) {
  const KinematicModel m = rcm6_preset();
  const DynamicParams d = rcm6_true_params(m);
  const Json j = io::to_json(d);
  EXPECT_EQ(j["layout"].size(), static_cast<std::size_t>(d.size()));
  EXPECT_EQ(j["layout"][0]["index"], 0);
  EXPECT_EQ(io::params_from_json(j, m).values(), d.values());
  Json bad = j;
  bad["values"]["link9.m"] = 1.0;
  EXPECT_THROW(io::params_from_json(bad, m), Error);
}

TEST(Reduction, RoundTrip) {
  const BaseReduction r = compute_base_reduction(planar_chain({0.5, 0.4}), 50, 3);
  const BaseReduction back = io::reduction_from_json(Json::parse(io::to_json(r).dump()));
  EXPECT_EQ(back.perm, r.perm);
  EXPECT_EQ(back.b, r.b);
  EXPECT_EQ(back.recombine, r.recombine);
  EXPECT_EQ(back.seed, 3u);
}

TEST(Trajectory, RoundTripAndSampledExport) {
  const KinematicModel m = planar_chain({0.5, 0.4});
  std::mt19937_64 rng(2);
  const FourierTrajectory t =
      random_feasible_trajectory(m, TrajectoryLimits::from_model(m, VectorXd::Constant(2, 2.0)), 6, 0.18, 0.3, rng, 60);
  const FourierTrajectory back = io::trajectory_from_json(io::to_json(t));
  EXPECT_EQ(back.a, t.a);
  EXPECT_EQ(back.b, t.b);
  EXPECT_EQ(back.q_offset, t.q_offset);
  const io::CsvTable s = io::trajectory_table(t, 200.0);
  EXPECT_EQ(s.header, (std::vector<std::string>{"t", "q1", "q2"}));
  EXPECT_EQ(s.data.rows(), samples_per_period(200.0, 0.18));
  EXPECT_EQ(s.data(3, 2), eval_trajectory(t, 3 / 200.0).q(1));
}

TEST(Nets, TrocarModelRoundTrip) {
  std::mt19937_64 rng(3);
  TrocarModel tm;
  tm.window = 2;
  for (int j = 0; j < 2; ++j) {
    tm.nets.emplace_back(trocar_input_size(2, 2), 4, rng);
    tm.nets.back().in_mean.setRandom();
    tm.nets.back().b2 = 0.25 * j;
  }
  TrainConfig cfg;
  cfg.window = 2;
  const TrocarModel back = io::trocar_from_json(Json::parse(io::to_json(tm, cfg).dump()));
  ASSERT_EQ(back.nets.size(), 2u);
  const VectorXd x = VectorXd::LinSpaced(9, -1.0, 1.0);
  for (int j = 0; j < 2; ++j) EXPECT_EQ(back.nets[j].forward(x), tm.nets[j].forward(x));
  Json bad = io::to_json(tm, cfg);
  bad["window"] = 3;
  EXPECT_THROW(io::trocar_from_json(bad), Error);
}

TEST(Csv, SampleLogRoundTripIsExact) {
  const fs::path dir = scratch_dir("log");
  SampleLog log;
  log.t = VectorXd::LinSpaced(7, 0.0, 0.03);
  log.q = MatrixXd::Random(7, 3);
  log.qd = MatrixXd::Random(7, 3) * 1e-7;
  log.tau = MatrixXd::Random(7, 3) * 1e5;
  for (bool with_qdd : {false, true}) {
    log.qdd = with_qdd ? MatrixXd(MatrixXd::Random(7, 3)) : MatrixXd();
    io::write_csv(dir / "log.csv", io::log_table(log));
    const io::CsvTable t = io::read_csv(dir / "log.csv");
    EXPECT_EQ(t.header.size(), with_qdd ? 13u : 10u);
    EXPECT_EQ(t.header[4], "qd1");
    const SampleLog back = io::log_from_table(t);
    EXPECT_EQ(back.q, log.q);
    EXPECT_EQ(back.qd, log.qd);
    EXPECT_EQ(back.tau, log.tau);
    EXPECT_EQ(back.has_qdd(), with_qdd);
  }
}

TEST(Csv, MalformedLogsAreDataErrors) {
  const fs::path dir = scratch_dir("bad");
  io::write_text(dir / "a.csv", "t,q1,qd1,tau1\n0,1,2,3\n0.1,1,2\n");
  io::write_text(dir / "b.csv", "t,q1,qd1,tau1\n0,1,2,x\n");
  io::write_text(dir / "c.csv", "t,x1,qd1,tau1\n0,1,2,3\n");
  io::write_text(dir / "d.csv", "t,q1,qd1,tau1\n0.1,1,2,3\n0,1,2,3\n");
  for (const char* f : {"a.csv", "b.csv", "c.csv", "d.csv"}) {
    try {
      io::log_from_table(io::read_csv(dir / f));
      ADD_FAILURE() << f;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kData) << f;
    }
  }
}

TEST(Csv, SidecarAndEstimateHeaders) {
  const io::CsvTable s = io::sidecar_table(VectorXd::Zero(2), MatrixXd::Zero(2, 2), MatrixXd::Zero(2, 3));
  EXPECT_EQ(s.header, (std::vector<std::string>{"t", "tau_clean_1", "tau_clean_2", "Fx", "Fy", "Fz"}));
  WrenchEstimate e;
  e.force = Vec3(1, 2, 3);
  e.flag = WrenchFlag::kWarmup;
  const io::CsvTable f = io::estimates_table({e});
  EXPECT_EQ(f.header, (std::vector<std::string>{"t", "Fx", "Fy", "Fz", "flag"}));
  EXPECT_EQ(f.data(0, 4), 2.0);
  e.has_torque = true;
  EXPECT_EQ(io::estimates_table({e}).header.size(), 8u);
}

TEST(Scenario, NoiseBlockDefaultsAndPortPlacement) {
  Json j = {{"model", "rcm6"},
            {"delta_true", "rcm6"},
            {"noise", Json::object()},
            {"trocar", {{"shaft_frame", 3}, {"q_ref", {0.35, -0.35, 0.1, 0, 0, 0}}, {"depth", 0.04}}},
            {"duration", 2.0}};
  const io::Scenario s = io::scenario_from_json(j, ".");
  EXPECT_EQ(s.plant.noise.tau_std, 0.005);
  EXPECT_TRUE(s.plant.trocar.enabled);
  EXPECT_NEAR(s.plant.trocar.port.norm(), 0.04, 1e-12);
  j.erase("noise");
  EXPECT_EQ(io::scenario_from_json(j, ".").plant.noise.tau_std, 0.0);
  j["rate"] = -1.0;
  EXPECT_THROW(io::scenario_from_json(j, "."), Error);
}

TEST(Repro, ConfigRoundTripKeepsEveryField) {
  const ReproConfig c = ReproConfig::defaults(true);
  const Json j = io::to_json(c);
  EXPECT_EQ(io::to_json(io::repro_config_from_json(j)), j);
  Json partial = {{"quick", true}, {"train", {{"epochs", 7}}}};
  const ReproConfig p = io::repro_config_from_json(partial);
  EXPECT_EQ(p.train.epochs, 7);
  EXPECT_EQ(p.train.hidden, c.train.hidden);
  partial["train"]["val_frac"] = 0.5;
  EXPECT_THROW(io::repro_config_from_json(partial), Error);
}

TEST(Manifest, HashIgnoresTimings) {
  io::RunManifest m;
  m.subcommand = "identify";
  m.seed = 4;
  m.outputs = {{"model.json", io::sha256_hex("x")}};
  m.stage_seconds = {{"fit", 1.5}};
  const std::string h = m.content_hash();
  m.stage_seconds = {{"fit", 9.0}};
  EXPECT_EQ(m.content_hash(), h);
  const io::RunManifest back = io::manifest_from_json(m.to_json());
  EXPECT_EQ(back.content_hash(), h);
  m.outputs[0].sha256 = io::sha256_hex("y");
  EXPECT_NE(m.content_hash(), h);
}

TEST(Metrics, RoundTrip) {
  MetricReport r;
  r.channels = {"Fx", "Fy"};
  r.rmse = Eigen::Vector2d(0.1, 0.2);
  r.nrmse = Eigen::Vector2d(0.01, 0.02);
  r.range = Eigen::Vector2d(10.0, 10.0);
  const MetricReport back = io::metrics_from_json(io::to_json(r));
  EXPECT_EQ(back.channels, r.channels);
  EXPECT_EQ(back.nrmse, r.nrmse);
  EXPECT_EQ(back.range, r.range);
}

}  // namespace
}  // namespace hforce
