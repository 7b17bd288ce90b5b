#pragma once

// Base (identifiable) parameters via QR with column pivoting.
//
// With W P = Q [R11 R12; 0 ~0] the dependent columns satisfy W2 = W1 * beta,
// beta = R11^-1 R12, so W delta = W1 (delta_1 + beta delta_2). The recombination
// matrix encodes delta_b = [I beta] P^T delta.

#include "hforce/lagdyn.hpp"

#include <cstdint>
#include <vector>

namespace hforce {

struct BaseReduction {
  std::vector<int> perm;  // pivot order over all n_delta columns; the first b are the base set
  int b = 0;
  MatrixXd recombine;     // b x n_delta
  double tol = 1e-8;
  std::uint64_t seed = 0;
  int n_probe = 0;

  int n_params() const { return static_cast<int>(perm.size()); }
  std::vector<int> base_columns() const { return {perm.begin(), perm.begin() + b}; }
};

struct ProbeOptions {
  double qd_sigma = 1.0;
  double qdd_sigma = 2.0;
};

/// Random probe states: positions uniform in the model limits, Gaussian rates.
std::vector<JointState> probe_states(const KinematicModel& model, int n_probe, std::uint64_t seed,
                                     const ProbeOptions& opts = {});

/// Stack regressor blocks for a list of states.
MatrixXd stacked_regressor(const KinematicModel& model, const std::vector<JointState>& states,
                           const DynamicsOptions& dyn = {});

BaseReduction reduce_from_matrix(const MatrixXd& w, double tol = 1e-8);

BaseReduction compute_base_reduction(const KinematicModel& model, int n_probe = 200,
                                     std::uint64_t seed = 0, double tol = 1e-8,
                                     const ProbeOptions& opts = {});

/// H_b = H P_b (column selection).
MatrixXd reduce_regressor(const BaseReduction& red, const MatrixXd& h);

/// delta_b = recombine * delta.
VectorXd base_params(const BaseReduction& red, const VectorXd& delta);

}  // namespace hforce
