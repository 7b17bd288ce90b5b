#include "hforce/experiments.hpp"

#include "hforce/presets.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>

namespace hforce {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Independent stream seeds derived from the run seed (SplitMix64 finaliser).
std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

MatrixXd stack_rows(const std::vector<MatrixXd>& blocks) {
  Eigen::Index rows = 0;
  for (const MatrixXd& b : blocks) rows += b.rows();
  MatrixXd out(rows, blocks.empty() ? 0 : blocks[0].cols());
  Eigen::Index r = 0;
  for (const MatrixXd& b : blocks) {
    out.middleRows(r, b.rows()) = b;
    r += b.rows();
  }
  return out;
}

std::vector<std::string> joint_names(int n, const char* prefix = "tau") {
  std::vector<std::string> out;
  for (int j = 1; j <= n; ++j) out.push_back(prefix + std::to_string(j));
  return out;
}

TrajectoryLimits box_limits(const MotionConfig& m, const VectorXd& qd_max) {
  TrajectoryLimits lim;
  lim.q_min = m.lo;
  lim.q_max = m.hi;
  lim.qd_min = -qd_max;
  lim.qd_max = qd_max;
  return lim;
}

IdentifyOptions raw_signals(const IdentifyOptions& prep) {
  IdentifyOptions raw = prep;
  raw.fc = 0.0;
  raw.use_logged_qdd = true;
  return raw;
}

MotionConfig motion(const VectorXd& lo, const VectorXd& hi, int n_logs, double duration) {
  MotionConfig m;
  m.lo = lo;
  m.hi = hi;
  m.n_logs = n_logs;
  m.duration = duration;
  m.n_harmonics = 6;
  m.f_f = 1.0 / duration;
  return m;
}

VectorXd vec6(double a, double b, double c, double d, double e, double f) {
  VectorXd v(6);
  v << a, b, c, d, e, f;
  return v;
}

}  // namespace

void MotionConfig::validate(int n_joints) const {
  const auto cfg = ErrorKind::kConfig;
  require(lo.size() == n_joints && hi.size() == n_joints, "motion box must have one bound per joint", cfg);
  require((hi.array() >= lo.array()).all(), "motion box upper bound below lower bound", cfg);
  require(n_logs >= 1 && duration > 0.0 && n_harmonics >= 1 && f_f > 0.0 && span > 0.0 && span <= 1.0,
          "invalid motion settings", cfg);
}

ReproConfig ReproConfig::defaults(bool quick) {
  ReproConfig c;
  c.noise.tau_rel = 0.01;
  c.qd_max = vec6(0.8, 0.8, 0.1, 1.5, 1.5, 1.5);
  const KinematicModel m = rcm6_preset();
  const double d = quick ? 8.0 : 20.0;
  c.heldout = motion(m.q_min(), m.q_max(), 1, d);
  c.ws_a = motion(vec6(-0.8, -0.7, 0.05, -1.5, -1.0, -1.0), vec6(-0.15, -0.15, 0.10, -0.2, -0.2, -0.2),
                  quick ? 2 : 4, d);
  c.ws_b = motion(vec6(0.15, 0.15, 0.12, 0.2, 0.2, 0.2), vec6(0.8, 0.7, 0.18, 1.5, 1.0, 1.0), 1, d);
  c.q_ref = vec6(0.35, -0.35, 0.1, 0.0, 0.0, 0.0);
  const VectorXd lo = vec6(0.15, -0.55, 0.07, -1.0, -0.7, -0.7);
  const VectorXd hi = vec6(0.55, -0.15, 0.16, 1.0, 0.7, 0.7);
  c.trocar_train = motion(lo, hi, quick ? 2 : 4, d);
  c.trocar_test = motion(lo, hi, 1, d);
  c.train.batch = 512;
  c.train.lr = 1e-3;
  c.train.epochs = quick ? 10 : 150;
  c.learner = c.train;
  if (quick) {
    c.excite_budget = 150;
    c.ident_periods = 2;
    c.train.hidden = c.learner.hidden = 32;
  }
  return c;
}

void ReproConfig::validate() const {
  const auto cfg = ErrorKind::kConfig;
  const int n = 6;
  require(rate > 0.0 && f_f > 0.0 && n_harmonics >= 1 && excite_budget >= 1 && ident_periods >= 1,
          "invalid excitation settings", cfg);
  require(qd_max.size() == n && (qd_max.array() > 0.0).all(), "qd_max needs six positive entries", cfg);
  require(q_ref.size() == n, "q_ref needs six entries", cfg);
  require(port_depth > 0.0 && k_t >= 0.0 && c_t >= 0.0, "invalid trocar settings", cfg);
  require(mismatch_channels >= 1 && mismatch_channels <= n, "mismatch_channels must be 1..6", cfg);
  require(force_peak > 0.0 && force_knot_dt > 0.0, "invalid contact settings", cfg);
  for (const MotionConfig* m : {&heldout, &ws_a, &ws_b, &trocar_train, &trocar_test}) m->validate(n);
  train.validate();
  learner.validate();
}

const VariantResult& ReproResult::variant(const std::string& name) const {
  for (const VariantResult& v : variants) {
    if (v.name == name) return v;
  }
  throw Error(ErrorKind::kInvalidArgument, "no variant named " + name);
}

double histogram_overlap(const VectorXd& a, const VectorXd& b, int bins) {
  require(a.size() > 0 && b.size() > 0 && bins >= 1, "histogram needs samples and bins");
  const double lo = std::min(a.minCoeff(), b.minCoeff());
  const double hi = std::max(a.maxCoeff(), b.maxCoeff());
  if (!(hi > lo)) return 1.0;
  auto hist = [&](const VectorXd& x) {
    VectorXd h = VectorXd::Zero(bins);
    for (double v : x) h(std::min(bins - 1, static_cast<int>((v - lo) / (hi - lo) * bins))) += 1.0;
    return VectorXd(h / static_cast<double>(x.size()));
  };
  return hist(a).cwiseMin(hist(b)).sum();
}

PlantConfig repro_plant(const ReproConfig& cfg, bool trocar) {
  const KinematicModel model = rcm6_preset();
  PlantConfig plant{model, rcm6_true_params(model), TrocarConfig{}, NoiseConfig{}, PdGains{}, 1e-3, DynamicsOptions{}};
  rcm6_default_gains(plant.gains.kp, plant.gains.kd);
  if (trocar) {
    const auto poses = forward_kinematics(model, cfg.q_ref);
    plant.trocar.enabled = true;
    plant.trocar.shaft_frame = 3;
    // The shaft passes through the remote centre at the base origin.
    plant.trocar.port = cfg.port_depth * poses[3].linear().col(2);
    plant.trocar.k_t = cfg.k_t;
    plant.trocar.c_t = cfg.c_t;
  }
  return plant;
}

std::vector<GeneratedData> simulate_motion(const PlantConfig& plant, const MotionConfig& motion,
                                           const ReproConfig& cfg, std::uint64_t seed,
                                           const ContactScript* contact) {
  motion.validate(plant.model.n_joints());
  const TrajectoryLimits lim = box_limits(motion, cfg.qd_max);
  std::vector<GeneratedData> out;
  for (int k = 0; k < motion.n_logs; ++k) {
    std::mt19937_64 rng(sub_seed(seed, 2 * k));
    const FourierTrajectory traj = random_feasible_trajectory(plant.model, lim, motion.n_harmonics, motion.f_f,
                                                              motion.span, rng, 40 * motion.n_harmonics);
    GenerateOptions go;
    go.duration = motion.duration;
    go.rate = cfg.rate;
    go.seed = sub_seed(seed, 2 * k + 1);
    go.log_qdd = true;
    go.contact = contact;
    out.push_back(generate_dataset(plant, [&](double t) { return eval_trajectory(traj, t); }, go));
  }
  return out;
}

ContactScript random_contact_script(double duration, double knot_dt, double peak, std::uint64_t seed) {
  require(duration > 0.0 && knot_dt > 0.0 && peak > 0.0, "invalid contact script settings");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.3, 1.0);
  ContactScript s;
  const int knots = std::max(2, static_cast<int>(std::floor(duration / knot_dt)) + 1);
  for (int k = 0; k < knots; ++k) {
    s.t.push_back(duration * k / (knots - 1));
    Vec3 f = Vec3::Zero();
    if (k > 0 && k < knots - 1) {
      const Vec3 dir = Vec3(g(rng), g(rng), g(rng)).normalized();
      // One knot reaches the full peak so the script spans the stated force range.
      f = dir * (k == knots / 2 ? peak : peak * u(rng));
    }
    s.force.push_back(f);
  }
  return s;
}

namespace {

int direct_input_size(int window, int n) { return 2 * window * n; }

JointSamples direct_samples(const std::vector<PreparedLog>& logs, const std::vector<MatrixXd>& tau,
                            int window, int joint) {
  int total = 0;
  for (const PreparedLog& p : logs) total += static_cast<int>(p.q.rows()) - window + 1;
  const int n = static_cast<int>(logs.front().q.cols());
  JointSamples s{MatrixXd(direct_input_size(window, n), total), VectorXd(total)};
  int col = 0;
  for (std::size_t l = 0; l < logs.size(); ++l) {
    const PreparedLog& p = logs[l];
    for (Eigen::Index i = window - 1; i < p.q.rows(); ++i, ++col) {
      s.x.col(col) = trocar_input(p.q.middleRows(i - window + 1, window), p.qd.middleRows(i - window + 1, window), 0.0)
                         .head(direct_input_size(window, n));
      s.y(col) = tau[l](i, joint);
    }
  }
  return s;
}

}  // namespace

DirectLearner train_direct_learner(const std::vector<SampleLog>& logs, int channels, const TrainConfig& cfg,
                                   const IdentifyOptions& prep) {
  require(!logs.empty(), "no logs given", ErrorKind::kData);
  std::vector<PreparedLog> prepared;
  std::vector<MatrixXd> tau;
  for (const SampleLog& log : logs) {
    require(log.n_samples() >= cfg.window, "log shorter than the learner window", ErrorKind::kData);
    prepared.push_back(preprocess(log, prep));
    tau.push_back(log.tau);
  }
  DirectLearner out;
  out.window = cfg.window;
  for (int j = 0; j < channels; ++j) {
    TrainConfig c = cfg;
    c.seed = cfg.seed + static_cast<std::uint64_t>(j);
    TrainHistory h;
    out.nets.push_back(train_net(direct_samples(prepared, tau, cfg.window, j), c, h));
  }
  return out;
}

MatrixXd predict_direct(const DirectLearner& learner, const MatrixXd& q, const MatrixXd& qd) {
  const int w = learner.window;
  const int n = static_cast<int>(q.cols());
  MatrixXd out = MatrixXd::Zero(q.rows(), static_cast<Eigen::Index>(learner.nets.size()));
  if (q.rows() < w) return out;
  MatrixXd x(direct_input_size(w, n), q.rows() - w + 1);
  for (Eigen::Index i = w - 1; i < q.rows(); ++i) {
    x.col(i - w + 1) = trocar_input(q.middleRows(i - w + 1, w), qd.middleRows(i - w + 1, w), 0.0).head(x.rows());
  }
  for (std::size_t j = 0; j < learner.nets.size(); ++j) {
    out.col(static_cast<Eigen::Index>(j)).tail(x.cols()) = learner.nets[j].forward_batch(x);
  }
  return out;
}

namespace {

MetricReport force_metrics(const std::vector<WrenchEstimate>& est, const MatrixXd& applied, int skip) {
  const int rows = static_cast<int>(est.size()) - skip;
  MatrixXd e(rows, 3), r(rows, 3);
  for (int i = 0; i < rows; ++i) {
    e.row(i) = est[skip + i].force.transpose();
    r.row(i) = applied.row(skip + i);
  }
  return metric_report(e, r, {"Fx", "Fy", "Fz"});
}

void run_variant(const ReproConfig& cfg, const KinematicModel& model, VariantResult& v, bool noisy,
                 const IdentifiedModel& idm, std::vector<std::pair<std::string, double>>& stages) {
  PlantConfig plant = repro_plant(cfg, true);
  if (noisy) plant.noise = cfg.noise;
  const IdentifyOptions prep = noisy ? cfg.prep : raw_signals(cfg.prep);
  const int w = cfg.train.window;
  v.name = noisy ? "noisy" : "noiseless";
  v.idm = idm;

  auto t0 = Clock::now();
  std::vector<SampleLog> train_logs;
  for (GeneratedData& d : simulate_motion(plant, cfg.trocar_train, cfg, sub_seed(cfg.seed, 40))) {
    train_logs.push_back(std::move(d.log));
  }
  const std::vector<GeneratedData> test = simulate_motion(plant, cfg.trocar_test, cfg, sub_seed(cfg.seed, 50));
  stages.emplace_back(v.name + ".simulate_trocar", seconds_since(t0));

  t0 = Clock::now();
  v.nets = train_trocar(build_trocar_dataset(train_logs, idm, model, w, prep), cfg.train);
  v.trocar.train_seconds = seconds_since(t0);
  v.trocar.epochs = cfg.train.epochs;
  stages.emplace_back(v.name + ".train_trocar", v.trocar.train_seconds);

  std::vector<MatrixXd> mb, hy, ref;
  for (const GeneratedData& d : test) {
    const PreparedLog p = preprocess(d.log, prep);
    const int rows = d.log.n_samples() - (w - 1);
    mb.push_back(expected_torque(model, idm, nullptr, p).bottomRows(rows));
    hy.push_back(expected_torque(model, idm, &v.nets, p).bottomRows(rows));
    ref.push_back(d.tau_clean.bottomRows(rows));
  }
  const MatrixXd r = stack_rows(ref);
  v.trocar.model = metric_report(stack_rows(mb), r, joint_names(6));
  v.trocar.hybrid = metric_report(stack_rows(hy), r, joint_names(6));

  t0 = Clock::now();
  MotionConfig contact_motion = cfg.trocar_test;
  contact_motion.n_logs = 1;
  const ContactScript script =
      random_contact_script(contact_motion.duration, cfg.force_knot_dt, cfg.force_peak, sub_seed(cfg.seed, 60));
  const GeneratedData d = simulate_motion(plant, contact_motion, cfg, sub_seed(cfg.seed, 70), &script).front();
  ForceResult& f = v.force;
  f.log = d.log;
  f.applied = d.force;
  f.model = estimate_series(model, idm, nullptr, d.log, prep);
  f.hybrid = estimate_series(model, idm, &v.nets, d.log, prep);
  f.model_metrics = force_metrics(f.model, f.applied, w - 1);
  f.hybrid_metrics = force_metrics(f.hybrid, f.applied, w - 1);
  f.peak = d.force.cwiseAbs().colwise().maxCoeff().transpose();
  stages.emplace_back(v.name + ".force", seconds_since(t0));
}

}  // namespace

ReproResult run_repro(const ReproConfig& cfg) {
  cfg.validate();
  ReproResult res;
  const KinematicModel model = rcm6_preset();
  const int n = model.n_joints();
  auto t0 = Clock::now();
  res.reduction = compute_base_reduction(model, 200, cfg.seed);
  res.stage_seconds.emplace_back("base_reduction", seconds_since(t0));

  t0 = Clock::now();
  ExciteOptions eo;
  eo.sample_rate = cfg.rate;
  eo.opt_sample_rate = cfg.excite_opt_rate;
  res.excite = optimize_excitation(model, res.reduction, TrajectoryLimits::from_model(model, cfg.qd_max),
                                   cfg.n_harmonics, cfg.f_f, cfg.seed, cfg.excite_budget, eo);
  res.stage_seconds.emplace_back("excite", seconds_since(t0));

  // Identification on the optimized trajectory, without and with torque noise.
  t0 = Clock::now();
  const PlantConfig free = repro_plant(cfg, false);
  GenerateOptions go;
  go.duration = cfg.ident_periods * res.excite.traj.period();
  go.rate = cfg.rate;
  go.seed = sub_seed(cfg.seed, 10);
  go.log_qdd = true;
  GeneratedData ident_data =
      generate_dataset(free, [&](double t) { return eval_trajectory(res.excite.traj, t); }, go);
  IdentRecovery& ir = res.ident;
  ir.noiseless = identify_ls(model, res.reduction, ident_data.log, raw_signals(cfg.prep));
  const VectorXd truth = base_params(res.reduction, free.delta.values());
  ir.base_rel_err = (ir.noiseless.delta_b - truth).norm() / truth.norm();
  apply_noise(ident_data, cfg.noise, sub_seed(cfg.seed, 11));
  ir.noisy = cfg.feasible ? identify_feasible(model, res.reduction, ident_data.log, cfg.prep)
                          : identify_ls(model, res.reduction, ident_data.log, cfg.prep);
  PlantConfig noisy_free = free;
  noisy_free.noise = cfg.noise;
  const GeneratedData held = simulate_motion(noisy_free, cfg.heldout, cfg, sub_seed(cfg.seed, 12)).front();
  const PreparedLog hp = preprocess(held.log, cfg.prep);
  const MatrixXd held_pred = predict_series(ir.noisy, model, hp.q, hp.qd, hp.qdd);
  ir.heldout = metric_report(held_pred, held.tau_clean, joint_names(n));
  ir.heldout_noisy_ref = metric_report(held_pred, held.log.tau, joint_names(n));
  res.stage_seconds.emplace_back("identify", seconds_since(t0));

  // Learner trained on workspace A, both estimators tested on workspace B.
  t0 = Clock::now();
  const auto logs_a = simulate_motion(noisy_free, cfg.ws_a, cfg, sub_seed(cfg.seed, 20));
  const auto logs_b = simulate_motion(noisy_free, cfg.ws_b, cfg, sub_seed(cfg.seed, 30));
  MismatchResult& mm = res.mismatch;
  mm.overlap.resize(n);
  for (int j = 0; j < n; ++j) {
    std::vector<MatrixXd> qa, qb;
    for (const auto& d : logs_a) qa.push_back(d.log.q.col(j));
    for (const auto& d : logs_b) qb.push_back(d.log.q.col(j));
    mm.overlap(j) = histogram_overlap(stack_rows(qa).col(0), stack_rows(qb).col(0));
  }
  std::vector<SampleLog> train_a;
  for (const auto& d : logs_a) train_a.push_back(d.log);
  const auto tl = Clock::now();
  const DirectLearner learner = train_direct_learner(train_a, cfg.mismatch_channels, cfg.learner, cfg.prep);
  mm.train_seconds = seconds_since(tl);
  const int c = cfg.mismatch_channels;
  const int w = cfg.learner.window;
  std::vector<MatrixXd> mb, ln, ref;
  for (const auto& d : logs_b) {
    const PreparedLog p = preprocess(d.log, cfg.prep);
    const int rows = d.log.n_samples() - (w - 1);
    mb.push_back(predict_series(ir.noisy, model, p.q, p.qd, p.qdd).leftCols(c).bottomRows(rows));
    ln.push_back(predict_direct(learner, p.q, p.qd).bottomRows(rows));
    ref.push_back(d.tau_clean.leftCols(c).bottomRows(rows));
  }
  const MatrixXd r = stack_rows(ref);
  mm.model = metric_report(stack_rows(mb), r, joint_names(c));
  mm.learner = metric_report(stack_rows(ln), r, joint_names(c));
  res.stage_seconds.emplace_back("mismatch", seconds_since(t0));

  if (cfg.run_noiseless) {
    res.variants.emplace_back();
    run_variant(cfg, model, res.variants.back(), false, ir.noiseless, res.stage_seconds);
  }
  res.variants.emplace_back();
  run_variant(cfg, model, res.variants.back(), true, ir.noisy, res.stage_seconds);
  return res;
}

namespace {

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

std::string list(const VectorXd& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) out += (i ? "/" : "") + fmt("%.4g", v(i));
  return out;
}

}  // namespace

std::vector<CheckResult> evaluate_repro(const ReproResult& r, const ReproConfig& cfg, const ReproThresholds& th) {
  std::vector<CheckResult> out;
  {
    const bool a = r.ident.base_rel_err < th.base_rel_err;
    const bool b = r.ident.heldout.nrmse.maxCoeff() < th.heldout_nrmse;
    out.push_back({5, "identification recovery", a && b,
                   fmt("noiseless base rel err %.3g (< %g); ", r.ident.base_rel_err, th.base_rel_err) +
                       "held-out NRMSE " + list(r.ident.heldout.nrmse) + fmt(" (< %g)", th.heldout_nrmse) +
                       " against clean torque; " + list(r.ident.heldout_noisy_ref.nrmse) + " against the noisy log"});
  }
  {
    const MismatchResult& m = r.mismatch;
    const bool better = (m.model.nrmse.array() < m.learner.nrmse.array()).all();
    const bool apart = m.overlap.maxCoeff() < th.overlap;
    out.push_back({6, "workspace mismatch", better && apart,
                   "model NRMSE " + list(m.model.nrmse) + " vs learner " + list(m.learner.nrmse) +
                       "; max workspace overlap " + fmt("%.3g", m.overlap.maxCoeff())});
  }
  {
    const VariantResult& v = r.variant("noisy");
    const VectorXd& mb = v.trocar.model.nrmse;
    const VectorXd& hy = v.trocar.hybrid.nrmse;
    const bool outer = hy(0) < mb(0) && hy(1) < mb(1);
    const bool all = hy.maxCoeff() < th.hybrid_nrmse;
    const bool epochs = cfg.train.epochs <= th.max_epochs;
    out.push_back({7, "trocar correction", outer && all && epochs,
                   "hybrid NRMSE " + list(hy) + " vs model " + list(mb) + fmt("; %g epochs", cfg.train.epochs)});
  }
  {
    bool pass = true;
    std::string detail;
    for (const VariantResult& v : r.variants) {
      const ForceResult& f = v.force;
      const VectorXd& e = f.hybrid_metrics.rmse;
      const bool noiseless = v.name == "noiseless";
      const VectorXd limit = noiseless ? VectorXd(th.force_peak_frac * f.peak) : VectorXd(th.force_range_frac * f.hybrid_metrics.range);
      const bool acc = (e.array() < limit.array()).all();
      const bool better = (e.array() < f.model_metrics.rmse.array()).all();
      pass = pass && acc && better;
      detail += (detail.empty() ? "" : "; ") + v.name + " hybrid RMSE " + list(e) + " N (limit " + list(limit) +
                ") vs model " + list(f.model_metrics.rmse);
    }
    const bool both = r.variants.size() == 2;
    if (!both) detail += "; the noiseless variant was not run";
    out.push_back({8, "force closure", pass && both, detail});
  }
  return out;
}

}  // namespace hforce
