#pragma once

// Linear-in-parameters rigid-body dynamics over a KinematicModel.
//
// The parameter vector delta is laid out as all link blocks followed by all joint
// blocks:
//   link block (10):  Lxx Lxy Lxz Lyy Lyz Lzz  Mx My Mz  m
//                     (inertia about the frame origin, first moment, mass; link frame)
//   joint block (6):  Ia  fv  fc  fo  ks  ksq0
//                     (reflected motor inertia on q_m; viscous, Coulomb and constant
//                      friction, and a linear spring on the uncoupled coordinate q:
//                      tau = ks * q - ksq0 with ksq0 = ks * q_s0)

#include "hforce/kinchain.hpp"

#include <array>
#include <random>
#include <string>
#include <vector>

namespace hforce {

inline constexpr int kLinkParams = 10;
inline constexpr int kJointParams = 6;

enum LinkParam { kLxx = 0, kLxy, kLxz, kLyy, kLyz, kLzz, kMx, kMy, kMz, kMass };
enum JointParam { kIa = 0, kFv, kFc, kFo, kKs, kKsQ0 };

struct LinkParams {
  std::array<double, 6> L{};  // xx xy xz yy yz zz
  Vec3 M = Vec3::Zero();
  double m = 0.0;

  Mat3 inertia() const;
  Eigen::Matrix4d pseudo_inertia() const;

  /// From mass, centre of mass and inertia about the centre of mass (link frame).
  static LinkParams from_com(double mass, const Vec3& com, const Mat3& inertia_com);
};

struct JointEnvParams {
  double I_motor = 0.0;
  double f_v = 0.0;
  double f_c = 0.0;
  double f_o = 0.0;
  double k_s = 0.0;
  double q_s0 = 0.0;
};

/// Index bookkeeping for delta; one name per entry.
class ParamLayout {
 public:
  explicit ParamLayout(const KinematicModel& model);
  ParamLayout(int n_links, int n_joints);

  int n_links() const { return n_links_; }
  int n_joints() const { return n_joints_; }
  int size() const { return kLinkParams * n_links_ + kJointParams * n_joints_; }
  int link_index(int link, LinkParam p) const { return kLinkParams * link + p; }
  int joint_index(int joint, JointParam p) const {
    return kLinkParams * n_links_ + kJointParams * joint + p;
  }
  const std::vector<std::string>& names() const { return names_; }
  int index_of(const std::string& name) const;

 private:
  int n_links_;
  int n_joints_;
  std::vector<std::string> names_;
};

class DynamicParams {
 public:
  explicit DynamicParams(ParamLayout layout);
  DynamicParams(ParamLayout layout, VectorXd values);

  const ParamLayout& layout() const { return layout_; }
  const VectorXd& values() const { return values_; }
  VectorXd& values() { return values_; }
  int size() const { return layout_.size(); }

  LinkParams link(int i) const;
  void set_link(int i, const LinkParams& p);
  JointEnvParams joint(int j) const;
  void set_joint(int j, const JointEnvParams& p);

 private:
  ParamLayout layout_;
  VectorXd values_;
};

struct DynamicsOptions {
  double coulomb_width = 0.01;  // rad/s (or m/s)
};

/// Odd, monotone saturation standing in for sign(qd).
double smooth_coulomb(double qd, double width);

/// Direct Newton-Euler evaluation of the motor torques for parameters delta.
VectorXd inverse_dynamics(const KinematicModel& model, const DynamicParams& delta,
                          const JointState& state, const DynamicsOptions& opts = {});

/// H(q_m, qd_m, qdd_m) with tau_m = H * delta (closed-form assembly).
MatrixXd regressor_row_block(const KinematicModel& model, const JointState& state,
                             const DynamicsOptions& opts = {});

/// H built column by column from inverse_dynamics with unit parameter vectors.
MatrixXd regressor_reference(const KinematicModel& model, const JointState& state,
                             const DynamicsOptions& opts = {});

/// Joint-space inertia M(q_m) including reflected motor inertia.
MatrixXd mass_matrix(const KinematicModel& model, const DynamicParams& delta,
                     const VectorXd& q_m);

double kinetic_energy(const KinematicModel& model, const DynamicParams& delta,
                      const VectorXd& q_m, const VectorXd& qd_m);

/// Gravity, spring and constant-offset potential; tau(q, 0, 0) is its gradient.
double potential_energy(const KinematicModel& model, const DynamicParams& delta,
                        const VectorXd& q_m);

struct FeasibilityViolation {
  std::string what;
  double margin;  // negative: amount by which the constraint is violated
};

struct FeasibilityReport {
  bool feasible = true;
  std::vector<FeasibilityViolation> violations;
};

FeasibilityReport feasibility_check(const DynamicParams& delta, double eig_tol = 1e-10);

/// Smallest eigenvalue of each link's pseudo-inertia.
VectorXd pseudo_inertia_min_eigs(const DynamicParams& delta);

/// Random physically consistent parameters (positive masses, PSD pseudo-inertias,
/// nonnegative friction). Intended for tests and probing.
DynamicParams random_physical_params(const KinematicModel& model, std::mt19937_64& rng);

}  // namespace hforce
