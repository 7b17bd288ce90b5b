#include "hforce/kinchain.hpp"

#include <cmath>
#include <numbers>

namespace hforce {

CouplingMap CouplingMap::identity(int n) {
  return CouplingMap{MatrixXd::Identity(n, n), MatrixXd::Identity(n, n)};
}

JointState JointState::zero(int n) {
  return JointState{VectorXd::Zero(n), VectorXd::Zero(n), VectorXd::Zero(n)};
}

KinematicModel::KinematicModel(std::string name, std::vector<DHFrame> frames, int n_joints,
                               CouplingMap coupling, int tip_frame, Vec3 gravity)
    : name_(std::move(name)),
      frames_(std::move(frames)),
      n_joints_(n_joints),
      coupling_(std::move(coupling)),
      tip_frame_(tip_frame),
      gravity_(gravity) {
  const auto cfg = ErrorKind::kConfig;
  require(n_joints_ >= 1, "model must have at least one joint", cfg);
  require(!frames_.empty(), "model has no frames", cfg);
  require(frames_[0].parent == -1 && frames_[0].kind == JointKind::kFixed,
          "frame 0 must be the fixed base frame", cfg);
  frames_[0].inertial = false;
  require(coupling_.m_to_d.rows() == n_joints_ && coupling_.m_to_d.cols() == n_joints_,
          "coupling m_to_d must be n_joints x n_joints", cfg);
  require(coupling_.d_to_q.rows() == n_joints_ && coupling_.d_to_q.cols() == n_joints_,
          "coupling d_to_q must be n_joints x n_joints", cfg);

  Eigen::FullPivLU<MatrixXd> lu_m(coupling_.m_to_d);
  require(lu_m.isInvertible(), "coupling m_to_d is singular", cfg);
  joint_map_ = coupling_.d_to_q * coupling_.m_to_d;
  Eigen::FullPivLU<MatrixXd> lu_c(joint_map_);
  require(lu_c.isInvertible(), "composed coupling d_to_q * m_to_d is singular", cfg);

  const int nf = n_frames();
  require(tip_frame_ >= 0 && tip_frame_ < nf, "tip frame index out of range", cfg);
  frame_rates_ = MatrixXd::Zero(nf, n_joints_);
  frame_offsets_ = VectorXd::Zero(nf);
  for (int f = 1; f < nf; ++f) {
    const DHFrame& fr = frames_[f];
    require(fr.parent >= 0 && fr.parent < f,
            "frame " + std::to_string(f) + " (" + fr.name + ") must have a parent index below its own",
            cfg);
    if (fr.inertial) link_frames_.push_back(f);
    if (fr.kind == JointKind::kFixed) continue;
    require(!fr.terms.empty(), "joint frame " + fr.name + " has no coordinate terms", cfg);
    for (const CoordTerm& t : fr.terms) {
      require(t.index >= 0 && t.index < 2 * n_joints_,
              "frame " + fr.name + " references coordinate " + std::to_string(t.index) +
                  " outside the complete coordinates",
              cfg);
      if (t.index < n_joints_) {
        frame_rates_.row(f) += t.coeff * joint_map_.row(t.index);
      } else {
        frame_rates_(f, t.index - n_joints_) += t.coeff;
      }
    }
    frame_offsets_(f) = fr.offset;
  }

  q_min_ = VectorXd::Constant(n_joints_, -std::numbers::pi);
  q_max_ = VectorXd::Constant(n_joints_, std::numbers::pi);
}

void KinematicModel::set_limits(VectorXd q_min, VectorXd q_max) {
  require_size(q_min.size(), n_joints_, "q_min");
  require_size(q_max.size(), n_joints_, "q_max");
  require(((q_max - q_min).array() >= 0.0).all(), "joint limits must satisfy q_min <= q_max",
          ErrorKind::kConfig);
  q_min_ = std::move(q_min);
  q_max_ = std::move(q_max);
}

KinematicModel KinematicModel::with_gravity(const Vec3& g) const {
  KinematicModel out = *this;
  out.gravity_ = g;
  return out;
}

VectorXd KinematicModel::frame_variables(const VectorXd& q_m) const {
  require_size(q_m.size(), n_joints_, "q_m");
  return frame_offsets_ + frame_rates_ * q_m;
}

int KinematicModel::find_frame(const std::string& name) const {
  for (int f = 0; f < n_frames(); ++f) {
    if (frames_[f].name == name) return f;
  }
  throw Error(ErrorKind::kConfig, "no frame named '" + name + "'");
}

bool KinematicModel::is_ancestor(int ancestor, int frame) const {
  while (frame >= 0) {
    if (frame == ancestor) return true;
    frame = frames_[frame].parent;
  }
  return false;
}

JointCoordinates motor_to_joint(const KinematicModel& model, const VectorXd& q_m) {
  require_size(q_m.size(), model.n_joints(), "q_m");
  JointCoordinates out;
  out.q_d = model.coupling().m_to_d * q_m;
  out.q = model.coupling().d_to_q * out.q_d;
  return out;
}

VectorXd joint_to_motor(const KinematicModel& model, const VectorXd& q_d) {
  require_size(q_d.size(), model.n_joints(), "q_d");
  return model.coupling().m_to_d.fullPivLu().solve(q_d);
}

Transform dh_transform(double a_prev, double alpha_prev, double d, double theta) {
  Transform t = Transform::Identity();
  t.rotate(Eigen::AngleAxisd(alpha_prev, Vec3::UnitX()));
  t.translate(Vec3(a_prev, 0.0, 0.0));
  t.rotate(Eigen::AngleAxisd(theta, Vec3::UnitZ()));
  t.translate(Vec3(0.0, 0.0, d));
  return t;
}

std::vector<Transform> forward_kinematics(const KinematicModel& model, const VectorXd& q_m) {
  const VectorXd v = model.frame_variables(q_m);
  const auto& frames = model.frames();
  std::vector<Transform> poses(frames.size(), Transform::Identity());
  for (std::size_t f = 1; f < frames.size(); ++f) {
    const DHFrame& fr = frames[f];
    double d = fr.d;
    double theta = fr.theta;
    if (fr.kind == JointKind::kRevolute) theta += v(f);
    if (fr.kind == JointKind::kPrismatic) d += v(f);
    poses[f] = poses[fr.parent] * dh_transform(fr.a_prev, fr.alpha_prev, d, theta);
  }
  return poses;
}

Mat6X point_jacobian(const KinematicModel& model, const std::vector<Transform>& poses,
                     int frame, const Vec3& point) {
  require(frame >= 0 && frame < model.n_frames(), "frame index out of range");
  const int n = model.n_joints();
  Mat6X jac = Mat6X::Zero(6, n);
  const auto& frames = model.frames();
  for (int f = frame; f > 0; f = frames[f].parent) {
    const DHFrame& fr = frames[f];
    if (fr.kind == JointKind::kFixed) continue;
    const Vec3 z = poses[f].linear().col(2);
    Eigen::Matrix<double, 6, 1> twist;
    if (fr.kind == JointKind::kRevolute) {
      twist.head<3>() = z.cross(point - poses[f].translation());
      twist.tail<3>() = z;
    } else {
      twist.head<3>() = z;
      twist.tail<3>().setZero();
    }
    jac += twist * model.frame_rates().row(f);
  }
  return jac;
}

Mat6X spatial_jacobian(const KinematicModel& model, const VectorXd& q_m) {
  const auto poses = forward_kinematics(model, q_m);
  const int tip = model.tip_frame();
  return point_jacobian(model, poses, tip, poses[tip].translation());
}

Vec3 tip_position(const KinematicModel& model, const VectorXd& q_m) {
  return forward_kinematics(model, q_m)[model.tip_frame()].translation();
}

}  // namespace hforce
