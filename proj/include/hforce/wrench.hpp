#pragma once

// External tip force from torque residuals, and the RMSE / NRMSE metrics.

#include "hforce/trocarnet.hpp"

#include <deque>
#include <string>
#include <vector>

namespace hforce {

enum class WrenchFlag { kOk = 0, kSingular = 1, kWarmup = 2 };

struct WrenchEstimate {
  double t = 0.0;
  Vec3 force = Vec3::Zero();
  Vec3 torque = Vec3::Zero();  // zero when only the force is solved for
  bool has_torque = false;
  std::string frame = "base";
  WrenchFlag flag = WrenchFlag::kOk;
  double sigma_min = 0.0;
};

struct WrenchOptions {
  double sigma_min = 1e-4;
  // Report only the force. With six or more joints the full wrench is still solved
  // and truncated; with fewer, only the translational Jacobian is used.
  bool force_only = true;
  Mat3 report_rotation = Mat3::Identity();  // base frame to reporting frame
  std::string frame = "base";
};

/// Least-squares solution of J^T w = tau_ext for the 6 x n tip Jacobian J.
WrenchEstimate solve_wrench(const Mat6X& jac, const VectorXd& tau_ext, const WrenchOptions& opts = {});

/// Free-space torque, plus the trocar correction when `trocar` is non-null, for
/// prepared signals; rows before the correction window are left uncorrected.
MatrixXd expected_torque(const KinematicModel& model, const IdentifiedModel& idm,
                         const TrocarModel* trocar, const PreparedLog& data);

/// One estimate per log row. Rows without a full correction window are flagged warm-up.
std::vector<WrenchEstimate> estimate_series(const KinematicModel& model, const IdentifiedModel& idm,
                                            const TrocarModel* trocar, const SampleLog& log,
                                            const IdentifyOptions& prep = {},
                                            const WrenchOptions& opts = {});

/// Causal estimator fed one sample at a time.
class StreamingEstimator {
 public:
  StreamingEstimator(KinematicModel model, IdentifiedModel idm, const TrocarModel* trocar,
                     WrenchOptions opts = {});

  /// qdd must come from the caller (for example a causal difference of qd).
  WrenchEstimate push(double t, const JointState& state, const VectorXd& tau);

 private:
  KinematicModel model_;
  IdentifiedModel idm_;
  const TrocarModel* trocar_;
  WrenchOptions opts_;
  std::deque<JointState> history_;
};

double rmse(const VectorXd& est, const VectorXd& ref);
double nrmse(const VectorXd& est, const VectorXd& ref);

struct MetricReport {
  std::vector<std::string> channels;
  VectorXd rmse;
  VectorXd nrmse;
  VectorXd range;  // max - min of each reference channel
};

/// Column-wise metrics; rows are samples.
MetricReport metric_report(const MatrixXd& est, const MatrixXd& ref,
                           const std::vector<std::string>& channels);

}  // namespace hforce
