#pragma once

// Simulated analogs of the evaluation experiments on the rcm6 arm: identification
// recovery, train/test workspace mismatch, in-trocar torque correction and tip-force
// estimation with scripted contact.

#include "hforce/excite.hpp"
#include "hforce/simplant.hpp"
#include "hforce/wrench.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace hforce {

/// Teleoperation-like motion: independent random Fourier trajectories confined to a
/// joint box, one per log.
struct MotionConfig {
  VectorXd lo, hi;
  int n_logs = 1;
  double duration = 20.0;  // s per log
  int n_harmonics = 4;
  double f_f = 0.1;
  double span = 0.9;       // peak-to-peak motion as a fraction of the box

  void validate(int n_joints) const;
};

struct ReproConfig {
  std::uint64_t seed = 0;
  double rate = 200.0;
  NoiseConfig noise;        // noisy variant; the noiseless variant disables it
  VectorXd qd_max;          // velocity bound for excitation and motion
  // Excitation and identification.
  int n_harmonics = 6;
  double f_f = 0.18;
  int excite_budget = 1500;
  double excite_opt_rate = 20.0;
  int ident_periods = 3;
  IdentifyOptions prep;
  bool feasible = true;     // physically feasible fit for the model-based estimator
  MotionConfig heldout;     // identification held-out trajectory
  // Workspace mismatch.
  MotionConfig ws_a, ws_b;
  int mismatch_channels = 3;
  TrainConfig learner;
  // Trocar and contact.
  VectorXd q_ref;           // configuration that places the port on the shaft
  double port_depth = 0.04; // m from the remote centre along the shaft at q_ref
  double k_t = 200.0;
  double c_t = 2.0;
  MotionConfig trocar_train, trocar_test;
  TrainConfig train;
  double force_peak = 10.0; // N
  double force_knot_dt = 1.0;
  bool run_noiseless = true;

  /// Full-size defaults; `quick` shrinks budgets, data and epochs for smoke runs.
  static ReproConfig defaults(bool quick = false);
  void validate() const;
};

struct IdentRecovery {
  IdentifiedModel noiseless;
  double base_rel_err = 0.0;    // noiseless fit against the true base parameters
  IdentifiedModel noisy;
  MetricReport heldout;         // noisy fit on the held-out trajectory, clean reference
  MetricReport heldout_noisy_ref;  // same prediction scored against the noisy log
};

struct MismatchResult {
  VectorXd overlap;             // per-joint histogram overlap of workspaces A and B
  MetricReport model, learner;  // on workspace B, clean reference
  double train_seconds = 0.0;
};

struct TrocarResult {
  MetricReport model, hybrid;   // held-out in-trocar logs, clean reference
  int epochs = 0;
  double train_seconds = 0.0;
};

struct ForceResult {
  SampleLog log;
  MatrixXd applied;             // rows aligned with log
  std::vector<WrenchEstimate> model, hybrid;
  MetricReport model_metrics, hybrid_metrics;  // rows past the warm-up
  Vec3 peak = Vec3::Zero();     // max |F| per axis
};

struct VariantResult {
  std::string name;             // "noiseless" or "noisy"
  IdentifiedModel idm;
  TrocarModel nets;
  TrocarResult trocar;
  ForceResult force;
};

struct ReproResult {
  BaseReduction reduction;
  ExciteResult excite;
  IdentRecovery ident;
  MismatchResult mismatch;
  std::vector<VariantResult> variants;
  std::vector<std::pair<std::string, double>> stage_seconds;

  const VariantResult& variant(const std::string& name) const;
};

/// Shared fraction of two normalized histograms over common bins (1 = identical).
double histogram_overlap(const VectorXd& a, const VectorXd& b, int bins = 50);

/// Plant for the scenario: true parameters, default gains and, when `trocar` is set,
/// the port placed on the shaft at q_ref.
PlantConfig repro_plant(const ReproConfig& cfg, bool trocar);

/// Logs for a motion config; trajectories and noise are seeded from `seed`.
std::vector<GeneratedData> simulate_motion(const PlantConfig& plant, const MotionConfig& motion,
                                           const ReproConfig& cfg, std::uint64_t seed,
                                           const ContactScript* contact = nullptr);

/// Piecewise-linear contact: random force vectors at fixed knots, zero at both ends,
/// magnitudes up to `peak`.
ContactScript random_contact_script(double duration, double knot_dt, double peak, std::uint64_t seed);

/// Direct learner: per-joint net from a window of positions and velocities to torque.
struct DirectLearner {
  int window = 5;
  std::vector<CorrectionNet> nets;
};
DirectLearner train_direct_learner(const std::vector<SampleLog>& logs, int channels, const TrainConfig& cfg,
                                   const IdentifyOptions& prep = {});
MatrixXd predict_direct(const DirectLearner& learner, const MatrixXd& q, const MatrixXd& qd);

ReproResult run_repro(const ReproConfig& cfg);

/// Thresholds of the simulated experiments.
struct ReproThresholds {
  double base_rel_err = 1e-6;
  double heldout_nrmse = 0.05;
  double overlap = 0.10;
  double hybrid_nrmse = 0.10;
  int max_epochs = 400;
  double force_peak_frac = 0.05;   // noiseless: RMSE per axis below this fraction of the peak
  double force_range_frac = 0.10;  // noisy: RMSE per axis below this fraction of the range
};

struct CheckResult {
  int criterion = 0;
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Pass/fail of identification recovery, workspace mismatch, trocar correction and
/// force closure. Wall-clock limits are not part of these checks.
std::vector<CheckResult> evaluate_repro(const ReproResult& r, const ReproConfig& cfg,
                                        const ReproThresholds& th = {});

}  // namespace hforce
