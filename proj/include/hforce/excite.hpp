#pragma once

// Periodic Fourier excitation trajectories and condition-number optimization.
//
//   q_j(t) = q0_j + sum_k [ a_jk / (k w) sin(k w t) - b_jk / (k w) cos(k w t) ],  w = 2 pi f_f

#include "hforce/baseparam.hpp"

#include <cstdint>
#include <random>

namespace hforce {

struct FourierTrajectory {
  VectorXd q_offset;  // n
  MatrixXd a;         // n x n_H
  MatrixXd b;         // n x n_H
  double f_f = 0.18;

  int n_joints() const { return static_cast<int>(q_offset.size()); }
  int n_harmonics() const { return static_cast<int>(a.cols()); }
  double period() const { return 1.0 / f_f; }

  static FourierTrajectory constant(const VectorXd& q, int n_harmonics, double f_f);
};

JointState eval_trajectory(const FourierTrajectory& traj, double t);

struct TrajectoryLimits {
  VectorXd q_min, q_max;
  VectorXd qd_min, qd_max;
  bool use_cart = false;
  Vec3 cart_min = Vec3::Constant(-1e9);
  Vec3 cart_max = Vec3::Constant(1e9);

  /// Model position limits with a symmetric velocity bound and no Cartesian box.
  static TrajectoryLimits from_model(const KinematicModel& model, const VectorXd& qd_abs_max);
};

/// Number of samples over one period at `sample_rate`: ceil(sample_rate / f_f).
int samples_per_period(double sample_rate, double f_f);

/// Stack of reduced regressor blocks at n_s uniformly spaced times over one period.
MatrixXd sampled_base_regressor(const KinematicModel& model, const BaseReduction& red,
                                const FourierTrajectory& traj, double sample_rate);

/// Ratio of extreme singular values over the columns (infinity when rank deficient).
double condition_number(const MatrixXd& w);

/// Smallest slack of every constraint over `grid_points` times per period;
/// negative when something is violated.
double constraint_margin(const KinematicModel& model, const FourierTrajectory& traj,
                         const TrajectoryLimits& lim, int grid_points);

struct ExciteOptions {
  int n_starts = 4;
  double sample_rate = 200.0;    // for the reported condition numbers
  double opt_sample_rate = 0.0;  // cheaper rate used inside the search; 0 means sample_rate
  int grid_per_harmonic = 20;
  double init_span = 0.2;        // fraction of the joint range covered by initial guesses
};

struct ExciteReport {
  double cond_before = 0.0;
  double cond_after = 0.0;
  int iterations = 0;
  double constraint_margin = 0.0;
  std::uint64_t seed = 0;
};

struct ExciteResult {
  FourierTrajectory traj;
  ExciteReport report;
};

/// Random trajectory with offsets near the range midpoints, shrunk until it is
/// feasible on the constraint grid (zero amplitude if nothing else fits).
FourierTrajectory random_feasible_trajectory(const KinematicModel& model,
                                             const TrajectoryLimits& lim, int n_harmonics,
                                             double f_f, double span, std::mt19937_64& rng,
                                             int grid_points);

/// Nelder-Mead multistart on log cond(W_b) plus an exterior constraint penalty.
/// `budget` is the total number of simplex iterations across all starts.
ExciteResult optimize_excitation(const KinematicModel& model, const BaseReduction& red,
                                 const TrajectoryLimits& lim, int n_harmonics, double f_f,
                                 std::uint64_t seed, int budget, const ExciteOptions& opts = {});

}  // namespace hforce
