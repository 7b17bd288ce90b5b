#pragma once

// Per-joint residual networks that learn the torque the trocar adds on top of the
// free-space model: two linear layers with a ReLU in between, trained with Adam.

#include "hforce/sysid.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace hforce {

/// Input width for a window of positions and velocities of every joint plus the
/// current free-space torque of the target joint.
inline int trocar_input_size(int window, int n_joints) { return 2 * window * n_joints + 1; }

class CorrectionNet {
 public:
  CorrectionNet() = default;
  /// PyTorch-style uniform initialisation; identity normalisation; b2 = 0.
  CorrectionNet(int d_in, int hidden, std::mt19937_64& rng);

  int d_in() const { return static_cast<int>(w1.cols()); }
  int hidden() const { return static_cast<int>(w1.rows()); }

  double forward(const VectorXd& x) const;
  /// One column per sample.
  VectorXd forward_batch(const MatrixXd& x) const;

  /// Normalised inputs, one column per sample.
  MatrixXd normalize(const MatrixXd& x) const;

  MatrixXd w1;       // hidden x d_in
  VectorXd b1;       // hidden
  VectorXd w2;       // hidden (the single output row)
  double b2 = 0.0;
  VectorXd in_mean;  // d_in
  VectorXd in_std;   // d_in
};

struct NetGradient {
  MatrixXd w1;
  VectorXd b1;
  VectorXd w2;
  double b2 = 0.0;
};

/// Mean squared error over the columns of x and its gradient (when grad is non-null).
double mse_loss(const CorrectionNet& net, const MatrixXd& x, const VectorXd& y,
                NetGradient* grad = nullptr);

/// Samples for one joint; column i of x is the input, y(i) the residual target.
struct JointSamples {
  MatrixXd x;
  VectorXd y;
};

struct TrocarDataset {
  int window = 5;
  int n_joints = 0;
  std::vector<JointSamples> joints;

  int n_samples() const { return joints.empty() ? 0 : static_cast<int>(joints[0].y.size()); }
};

/// Input vector at the last row of the given history (rows are time, oldest first).
VectorXd trocar_input(const MatrixXd& q_hist, const MatrixXd& qd_hist, double tau_fs);

/// Residual dataset from logs recorded through the trocar without tip contact. Inputs
/// and the free-space estimate use the preprocessed signals; targets are the measured
/// torque minus the free-space estimate.
TrocarDataset build_trocar_dataset(const std::vector<SampleLog>& logs, const IdentifiedModel& idm,
                                   const KinematicModel& model, int window,
                                   const IdentifyOptions& prep = {});

struct TrainConfig {
  int epochs = 400;
  double lr = 1e-4;
  int batch = 10000;
  int window = 5;
  int hidden = 256;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int patience = 10;
  double factor = 0.5;
  double threshold = 1e-4;  // relative improvement that resets the plateau counter
  double train_frac = 0.8;
  double val_frac = 0.1;
  double test_frac = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::vector<double> lr;
  double test_loss = 0.0;
};

struct SplitIndices {
  std::vector<int> train, val, test;
};

/// Seeded shuffle of [0, n) cut by the configured fractions.
SplitIndices split_indices(int n, const TrainConfig& cfg);

/// Per-channel mean and standard deviation over the chosen columns (std 1 for constants).
void input_stats(const MatrixXd& x, const std::vector<int>& cols, VectorXd& mean, VectorXd& std);

CorrectionNet train_net(const JointSamples& data, const TrainConfig& cfg, TrainHistory& history);

struct TrocarModel {
  int window = 5;
  std::vector<CorrectionNet> nets;  // one per joint
  std::vector<TrainHistory> history;
};

TrocarModel train_trocar(const TrocarDataset& data, const TrainConfig& cfg);

/// Corrected free-space torque tau_fs + r for the newest row of the history; needs at
/// least `window` rows.
VectorXd correct(const TrocarModel& tm, const MatrixXd& q_hist, const MatrixXd& qd_hist,
                 const VectorXd& tau_fs);

/// Corrected series for rows window-1 .. n-1; earlier rows are copied uncorrected.
MatrixXd correct_series(const TrocarModel& tm, const MatrixXd& q, const MatrixXd& qd,
                        const MatrixXd& tau_fs);

}  // namespace hforce
