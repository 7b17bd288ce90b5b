#pragma once

// Identification pipeline: preprocessing, weighted least squares on the base
// parameters, and a physically constrained fit of the full parameter vector.

#include "hforce/baseparam.hpp"

#include <string>
#include <vector>

namespace hforce {

/// Time series in motor coordinates; one row per sample, one column per joint.
struct SampleLog {
  VectorXd t;
  MatrixXd q;
  MatrixXd qd;
  MatrixXd tau;
  MatrixXd qdd;  // empty when not logged

  int n_samples() const { return static_cast<int>(t.size()); }
  int n_joints() const { return static_cast<int>(q.cols()); }
  bool has_qdd() const { return qdd.size() > 0; }
  JointState state(int i) const;
  /// Rows [begin, end).
  SampleLog slice(int begin, int end) const;
};

/// Checks shapes and strictly increasing time stamps.
void validate_log(const SampleLog& log);

/// 1 / median sample spacing; throws if the spacing jitters by 1 % or more.
double uniform_rate(const VectorXd& t);

/// Zero-phase low-pass: a third-order Butterworth cascade run forward and backward.
VectorXd lowpass_filter(const VectorXd& x, double fs, double fc);
MatrixXd lowpass_filter_columns(const MatrixXd& x, double fs, double fc);

/// Central differences inside, second-order one-sided differences at the ends.
VectorXd differentiate(const VectorXd& x, const VectorXd& t);

struct IdentifyOptions {
  double fc = 10.0;          // Hz; <= 0 disables filtering
  bool filter_q = false;
  bool use_logged_qdd = true;  // only consulted when filtering is disabled
  DynamicsOptions dyn;
};

/// Signals fed to the regressor after filtering and differentiation.
struct PreparedLog {
  MatrixXd q, qd, qdd, tau;
};

PreparedLog preprocess(const SampleLog& log, const IdentifyOptions& opts);

struct FitReport {
  std::string mode;          // "unconstrained" or "feasible"
  VectorXd weights;          // per joint, 1 / torque range
  VectorXd residual_rms;     // per joint, torque units
  double cond = 0.0;         // of the weighted base regressor
  int iterations = 0;
  std::vector<double> objective_history;  // best weighted cost after each iteration
};

struct IdentifiedModel {
  BaseReduction reduction;
  VectorXd delta_b;
  VectorXd delta;  // full vector; empty for the unconstrained fit
  DynamicsOptions dyn;
  FitReport report;
};

struct WeightedLsResult {
  VectorXd x;
  VectorXd weights;
  VectorXd residual_rms;
  double cond = 0.0;
};

/// Rows are sample-major (row i * n_joints + j). Joint j rows are scaled by
/// 1 / (max tau_j - min tau_j) before the least-squares solve.
WeightedLsResult solve_weighted_ls(const MatrixXd& w, const VectorXd& tau, int n_joints);

/// Stacked base regressor and torques for a prepared log.
void stack_problem(const KinematicModel& model, const BaseReduction* red, const PreparedLog& data,
                   const DynamicsOptions& dyn, MatrixXd& w, VectorXd& tau);

IdentifiedModel identify_ls(const KinematicModel& model, const BaseReduction& red,
                            const SampleLog& log, const IdentifyOptions& opts = {});

struct FeasibleOptions {
  int max_iter = 400;
  double mu0 = 1e-3;
  double mu_final = 1e-16;
};

IdentifiedModel identify_feasible(const KinematicModel& model, const BaseReduction& red,
                                  const SampleLog& log, const IdentifyOptions& opts = {},
                                  const FeasibleOptions& fopts = {});

VectorXd predict_torque(const IdentifiedModel& idm, const KinematicModel& model,
                        const JointState& state);

/// Prediction for every row of prepared signals.
MatrixXd predict_series(const IdentifiedModel& idm, const KinematicModel& model,
                        const MatrixXd& q, const MatrixXd& qd, const MatrixXd& qdd);

}  // namespace hforce
