#pragma once

// Tree-structured kinematics in the modified Denavit-Hartenberg convention.
//
// Coordinates used throughout the library:
//   q_m  motor coordinates (the generalized coordinates; length n_joints)
//   q_d  controller ("coupled") coordinates,    q_d = m_to_d * q_m
//   q    uncoupled kinematic coordinates,      q   = d_to_q * q_d
//   q_c  complete coordinates,                 q_c = [q; q_m]  (length 2 * n_joints)
//
// Every frame's joint variable is an affine function of q_c, hence of q_m.
// That keeps the Lagrangian of the whole tree expressible in q_m alone.

#include "hforce/common.hpp"

#include <Eigen/Geometry>

#include <string>
#include <vector>

namespace hforce {

using Transform = Eigen::Isometry3d;

enum class JointKind { kFixed, kRevolute, kPrismatic };

/// One term of a joint expression: coeff * q_c[index].
struct CoordTerm {
  int index = 0;
  double coeff = 1.0;
};

/// One row of a modified-DH table.
///
/// The local transform is Rx(alpha_prev) Tx(a_prev) Rz(theta_total) Tz(d_total), where
/// for a revolute frame theta_total = theta + offset + sum(terms) and for a prismatic
/// frame d_total = d + offset + sum(terms). Fixed frames ignore terms and offset.
struct DHFrame {
  std::string name;
  int parent = -1;
  double a_prev = 0.0;
  double alpha_prev = 0.0;
  double d = 0.0;
  double theta = 0.0;
  JointKind kind = JointKind::kFixed;
  std::vector<CoordTerm> terms;
  double offset = 0.0;
  // Whether the frame carries a rigid body (10 barycentric parameters).
  bool inertial = true;
};

/// Linear maps between motor, controller and kinematic coordinates.
struct CouplingMap {
  MatrixXd m_to_d;
  MatrixXd d_to_q;

  static CouplingMap identity(int n);
};

/// Motor-space joint state.
struct JointState {
  VectorXd q;
  VectorXd qd;
  VectorXd qdd;

  static JointState zero(int n);
};

/// Immutable kinematic tree. frames()[0] is always the fixed base frame.
class KinematicModel {
 public:
  KinematicModel(std::string name, std::vector<DHFrame> frames, int n_joints,
                 CouplingMap coupling, int tip_frame, Vec3 gravity);

  const std::string& name() const { return name_; }
  const std::vector<DHFrame>& frames() const { return frames_; }
  int n_frames() const { return static_cast<int>(frames_.size()); }
  int n_joints() const { return n_joints_; }
  int n_links() const { return static_cast<int>(link_frames_.size()); }
  const CouplingMap& coupling() const { return coupling_; }
  int tip_frame() const { return tip_frame_; }
  const Vec3& gravity() const { return gravity_; }
  KinematicModel with_gravity(const Vec3& g) const;

  /// Frame indices that carry link inertia, in increasing order.
  const std::vector<int>& link_frames() const { return link_frames_; }

  /// Composed map q = joint_map() * q_m.
  const MatrixXd& joint_map() const { return joint_map_; }

  /// Row f maps dq_m to the rate of frame f's joint variable (zero for fixed frames).
  const MatrixXd& frame_rates() const { return frame_rates_; }

  /// Value of every frame's joint variable at q_m (zero for fixed frames).
  VectorXd frame_variables(const VectorXd& q_m) const;

  /// Position limits in motor coordinates, used for probing and random sampling.
  const VectorXd& q_min() const { return q_min_; }
  const VectorXd& q_max() const { return q_max_; }
  void set_limits(VectorXd q_min, VectorXd q_max);

  int find_frame(const std::string& name) const;

  /// Whether `ancestor` lies on the path from the base to `frame` (inclusive).
  bool is_ancestor(int ancestor, int frame) const;

 private:
  std::string name_;
  std::vector<DHFrame> frames_;
  int n_joints_;
  CouplingMap coupling_;
  int tip_frame_;
  Vec3 gravity_;
  std::vector<int> link_frames_;
  MatrixXd joint_map_;
  MatrixXd frame_rates_;
  VectorXd frame_offsets_;
  VectorXd q_min_;
  VectorXd q_max_;
};

struct JointCoordinates {
  VectorXd q_d;
  VectorXd q;
};

JointCoordinates motor_to_joint(const KinematicModel& model, const VectorXd& q_m);

/// Inverse of the motor to controller map.
VectorXd joint_to_motor(const KinematicModel& model, const VectorXd& q_d);

/// Local modified-DH transform.
Transform dh_transform(double a_prev, double alpha_prev, double d, double theta);

/// World pose of every frame (index-aligned with model.frames()).
std::vector<Transform> forward_kinematics(const KinematicModel& model, const VectorXd& q_m);

/// Geometric Jacobian (rows: linear velocity of `point`, then angular velocity), both
/// in the base frame, of a point rigidly attached to `frame`, with respect to q_m.
Mat6X point_jacobian(const KinematicModel& model, const std::vector<Transform>& poses,
                     int frame, const Vec3& point);

/// Jacobian of the tip frame origin with respect to motor coordinates.
Mat6X spatial_jacobian(const KinematicModel& model, const VectorXd& q_m);

Vec3 tip_position(const KinematicModel& model, const VectorXd& q_m);

}  // namespace hforce
