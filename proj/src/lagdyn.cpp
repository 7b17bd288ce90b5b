#include "hforce/lagdyn.hpp"

#include <cmath>

namespace hforce {
namespace {

const std::array<const char*, kLinkParams> kLinkNames = {"Lxx", "Lxy", "Lxz", "Lyy", "Lyz",
                                                         "Lzz", "Mx",  "My",  "Mz",  "m"};
const std::array<const char*, kJointParams> kJointNames = {"Ia", "fv", "fc", "fo", "ks", "ksq0"};

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return s;
}

// Maps the six unique entries of a symmetric L onto L * w.
Eigen::Matrix<double, 3, 6> inertia_action(const Vec3& w) {
  Eigen::Matrix<double, 3, 6> a;
  a << w.x(), w.y(), w.z(), 0.0, 0.0, 0.0,
       0.0, w.x(), 0.0, w.y(), w.z(), 0.0,
       0.0, 0.0, w.x(), 0.0, w.y(), w.z();
  return a;
}

// World-frame kinematics of every frame along a motion.
struct TreeMotion {
  std::vector<Transform> poses;
  std::vector<Vec3> w, dw, v, a;
  VectorXd rate;   // joint-variable rates
  VectorXd accel;  // joint-variable accelerations
};

TreeMotion propagate(const KinematicModel& model, const VectorXd& q, const VectorXd& qd,
                     const VectorXd& qdd, bool gravity) {
  TreeMotion m;
  m.poses = forward_kinematics(model, q);
  m.rate = model.frame_rates() * qd;
  m.accel = model.frame_rates() * qdd;
  const int nf = model.n_frames();
  m.w.assign(nf, Vec3::Zero());
  m.dw.assign(nf, Vec3::Zero());
  m.v.assign(nf, Vec3::Zero());
  m.a.assign(nf, Vec3::Zero());
  if (gravity) m.a[0] = -model.gravity();
  const auto& frames = model.frames();
  for (int f = 1; f < nf; ++f) {
    const int p = frames[f].parent;
    const Vec3 z = m.poses[f].linear().col(2);
    const Vec3 r = m.poses[f].translation() - m.poses[p].translation();
    m.w[f] = m.w[p];
    m.dw[f] = m.dw[p];
    m.v[f] = m.v[p] + m.w[p].cross(r);
    m.a[f] = m.a[p] + m.dw[p].cross(r) + m.w[p].cross(m.w[p].cross(r));
    if (frames[f].kind == JointKind::kRevolute) {
      m.w[f] += z * m.rate(f);
      m.dw[f] += z * m.accel(f) + m.w[p].cross(z) * m.rate(f);
    } else if (frames[f].kind == JointKind::kPrismatic) {
      m.v[f] += z * m.rate(f);
      m.a[f] += z * m.accel(f) + 2.0 * m.w[p].cross(z) * m.rate(f);
    }
  }
  return m;
}

void check_state(const KinematicModel& model, const JointState& s) {
  const int n = model.n_joints();
  require_size(s.q.size(), n, "state.q");
  require_size(s.qd.size(), n, "state.qd");
  require_size(s.qdd.size(), n, "state.qdd");
}

void check_params(const KinematicModel& model, const DynamicParams& delta) {
  require(delta.layout().n_links() == model.n_links() &&
              delta.layout().n_joints() == model.n_joints(),
          "parameter layout does not match the model");
}

// Link torques (in motor space) for the given motion; gravity folded into m.a[0].
VectorXd link_torques(const KinematicModel& model, const DynamicParams& delta,
                      const TreeMotion& m) {
  const int nf = model.n_frames();
  const auto& frames = model.frames();
  std::vector<Vec3> force(nf, Vec3::Zero()), moment(nf, Vec3::Zero());
  const auto& links = model.link_frames();
  for (int k = 0; k < static_cast<int>(links.size()); ++k) {
    const int f = links[k];
    const LinkParams lp = delta.link(k);
    const Mat3 rot = m.poses[f].linear();
    const Vec3 c = rot * lp.M;
    const Mat3 inertia = rot * lp.inertia() * rot.transpose();
    force[f] = lp.m * m.a[f] + m.dw[f].cross(c) + m.w[f].cross(m.w[f].cross(c));
    moment[f] = inertia * m.dw[f] + m.w[f].cross(inertia * m.w[f]) + c.cross(m.a[f]);
  }
  VectorXd tau_v = VectorXd::Zero(nf);
  for (int f = nf - 1; f >= 1; --f) {
    const Vec3 z = m.poses[f].linear().col(2);
    if (frames[f].kind == JointKind::kRevolute) tau_v(f) = z.dot(moment[f]);
    if (frames[f].kind == JointKind::kPrismatic) tau_v(f) = z.dot(force[f]);
    const int p = frames[f].parent;
    const Vec3 r = m.poses[f].translation() - m.poses[p].translation();
    force[p] += force[f];
    moment[p] += moment[f] + r.cross(force[f]);
  }
  return model.frame_rates().transpose() * tau_v;
}

}  // namespace

Mat3 LinkParams::inertia() const {
  Mat3 l;
  l << L[0], L[1], L[2], L[1], L[3], L[4], L[2], L[4], L[5];
  return l;
}

Eigen::Matrix4d LinkParams::pseudo_inertia() const {
  const Mat3 l = inertia();
  Eigen::Matrix4d j;
  j.topLeftCorner<3, 3>() = 0.5 * l.trace() * Mat3::Identity() - l;
  j.topRightCorner<3, 1>() = M;
  j.bottomLeftCorner<1, 3>() = M.transpose();
  j(3, 3) = m;
  return j;
}

LinkParams LinkParams::from_com(double mass, const Vec3& com, const Mat3& inertia_com) {
  const Mat3 s = skew(com);
  const Mat3 l = inertia_com + mass * s.transpose() * s;
  LinkParams p;
  p.L = {l(0, 0), l(0, 1), l(0, 2), l(1, 1), l(1, 2), l(2, 2)};
  p.M = mass * com;
  p.m = mass;
  return p;
}

ParamLayout::ParamLayout(const KinematicModel& model)
    : n_links_(model.n_links()), n_joints_(model.n_joints()) {
  names_.reserve(size());
  for (int f : model.link_frames()) {
    for (const char* s : kLinkNames) names_.push_back("link" + model.frames()[f].name + "." + s);
  }
  for (int j = 0; j < n_joints_; ++j) {
    for (const char* s : kJointNames) names_.push_back("joint" + std::to_string(j + 1) + "." + s);
  }
}

ParamLayout::ParamLayout(int n_links, int n_joints) : n_links_(n_links), n_joints_(n_joints) {
  for (int i = 0; i < n_links_; ++i) {
    for (const char* s : kLinkNames) names_.push_back("link" + std::to_string(i) + "." + s);
  }
  for (int j = 0; j < n_joints_; ++j) {
    for (const char* s : kJointNames) names_.push_back("joint" + std::to_string(j + 1) + "." + s);
  }
}

int ParamLayout::index_of(const std::string& name) const {
  for (int i = 0; i < static_cast<int>(names_.size()); ++i) {
    if (names_[i] == name) return i;
  }
  throw Error(ErrorKind::kConfig, "unknown parameter name '" + name + "'");
}

DynamicParams::DynamicParams(ParamLayout layout)
    : layout_(std::move(layout)), values_(VectorXd::Zero(layout_.size())) {}

DynamicParams::DynamicParams(ParamLayout layout, VectorXd values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  require_size(values_.size(), layout_.size(), "parameter vector");
}

LinkParams DynamicParams::link(int i) const {
  const int o = layout_.link_index(i, kLxx);
  LinkParams p;
  for (int k = 0; k < 6; ++k) p.L[k] = values_(o + k);
  p.M = values_.segment<3>(o + kMx);
  p.m = values_(o + kMass);
  return p;
}

void DynamicParams::set_link(int i, const LinkParams& p) {
  const int o = layout_.link_index(i, kLxx);
  for (int k = 0; k < 6; ++k) values_(o + k) = p.L[k];
  values_.segment<3>(o + kMx) = p.M;
  values_(o + kMass) = p.m;
}

JointEnvParams DynamicParams::joint(int j) const {
  const int o = layout_.joint_index(j, kIa);
  JointEnvParams p;
  p.I_motor = values_(o + kIa);
  p.f_v = values_(o + kFv);
  p.f_c = values_(o + kFc);
  p.f_o = values_(o + kFo);
  p.k_s = values_(o + kKs);
  p.q_s0 = p.k_s != 0.0 ? values_(o + kKsQ0) / p.k_s : 0.0;
  return p;
}

void DynamicParams::set_joint(int j, const JointEnvParams& p) {
  const int o = layout_.joint_index(j, kIa);
  values_(o + kIa) = p.I_motor;
  values_(o + kFv) = p.f_v;
  values_(o + kFc) = p.f_c;
  values_(o + kFo) = p.f_o;
  values_(o + kKs) = p.k_s;
  values_(o + kKsQ0) = p.k_s * p.q_s0;
}

double smooth_coulomb(double qd, double width) {
  require(width > 0.0, "smooth_coulomb width must be positive");
  return std::tanh(qd / width);
}

VectorXd inverse_dynamics(const KinematicModel& model, const DynamicParams& delta,
                          const JointState& state, const DynamicsOptions& opts) {
  check_state(model, state);
  check_params(model, delta);
  const TreeMotion m = propagate(model, state.q, state.qd, state.qdd, true);
  VectorXd tau = link_torques(model, delta, m);

  const ParamLayout& lay = delta.layout();
  const VectorXd& d = delta.values();
  const MatrixXd& c = model.joint_map();
  const VectorXd q = c * state.q;
  const VectorXd qd = c * state.qd;
  VectorXd env(model.n_joints());
  for (int j = 0; j < model.n_joints(); ++j) {
    env(j) = d(lay.joint_index(j, kFv)) * qd(j) +
             d(lay.joint_index(j, kFc)) * smooth_coulomb(qd(j), opts.coulomb_width) +
             d(lay.joint_index(j, kFo)) + d(lay.joint_index(j, kKs)) * q(j) -
             d(lay.joint_index(j, kKsQ0));
    tau(j) += d(lay.joint_index(j, kIa)) * state.qdd(j);
  }
  tau += c.transpose() * env;
  return tau;
}

MatrixXd regressor_row_block(const KinematicModel& model, const JointState& state,
                             const DynamicsOptions& opts) {
  check_state(model, state);
  const ParamLayout lay(model.n_links(), model.n_joints());
  const int n = model.n_joints();
  const int nf = model.n_frames();
  const auto& frames = model.frames();
  const TreeMotion m = propagate(model, state.q, state.qd, state.qdd, true);

  // Regressor on the frame joint variables for the link blocks.
  MatrixXd hv = MatrixXd::Zero(nf, kLinkParams * model.n_links());
  const auto& links = model.link_frames();
  Eigen::Matrix<double, 3, kLinkParams> fb, nb;
  for (int k = 0; k < static_cast<int>(links.size()); ++k) {
    const int i = links[k];
    const Mat3 rot = m.poses[i].linear();
    const Vec3 w = rot.transpose() * m.w[i];
    const Vec3 dw = rot.transpose() * m.dw[i];
    const Vec3 a = rot.transpose() * m.a[i];
    const Mat3 sw = skew(w);

    fb.setZero();
    fb.block<3, 3>(0, kMx) = skew(dw) + sw * sw;
    fb.col(kMass) = a;
    nb.setZero();
    nb.block<3, 6>(0, kLxx) = inertia_action(dw) + sw * inertia_action(w);
    nb.block<3, 3>(0, kMx) = -skew(a);

    const Eigen::Matrix<double, 3, kLinkParams> fw = rot * fb;
    const Eigen::Matrix<double, 3, kLinkParams> nw = rot * nb;
    const Vec3 pi = m.poses[i].translation();
    for (int j = i; j > 0; j = frames[j].parent) {
      const Vec3 z = m.poses[j].linear().col(2);
      if (frames[j].kind == JointKind::kRevolute) {
        const Vec3 zu = z.cross(pi - m.poses[j].translation());
        hv.block(j, kLinkParams * k, 1, kLinkParams) = z.transpose() * nw + zu.transpose() * fw;
      } else if (frames[j].kind == JointKind::kPrismatic) {
        hv.block(j, kLinkParams * k, 1, kLinkParams) = z.transpose() * fw;
      }
    }
  }

  MatrixXd h = MatrixXd::Zero(n, lay.size());
  h.leftCols(kLinkParams * model.n_links()) = model.frame_rates().transpose() * hv;

  const MatrixXd& c = model.joint_map();
  const VectorXd q = c * state.q;
  const VectorXd qd = c * state.qd;
  for (int j = 0; j < n; ++j) {
    h(j, lay.joint_index(j, kIa)) = state.qdd(j);
    // Environment terms act on q_j and map back through c^T.
    const auto col = c.row(j).transpose();
    h.col(lay.joint_index(j, kFv)) = col * qd(j);
    h.col(lay.joint_index(j, kFc)) = col * smooth_coulomb(qd(j), opts.coulomb_width);
    h.col(lay.joint_index(j, kFo)) = col;
    h.col(lay.joint_index(j, kKs)) = col * q(j);
    h.col(lay.joint_index(j, kKsQ0)) = -col;
  }
  return h;
}

MatrixXd regressor_reference(const KinematicModel& model, const JointState& state,
                             const DynamicsOptions& opts) {
  const ParamLayout lay(model);
  MatrixXd h(model.n_joints(), lay.size());
  DynamicParams unit(lay);
  for (int k = 0; k < lay.size(); ++k) {
    unit.values().setZero();
    unit.values()(k) = 1.0;
    h.col(k) = inverse_dynamics(model, unit, state, opts);
  }
  return h;
}

MatrixXd mass_matrix(const KinematicModel& model, const DynamicParams& delta,
                     const VectorXd& q_m) {
  check_params(model, delta);
  const int n = model.n_joints();
  require_size(q_m.size(), n, "q_m");
  MatrixXd mm(n, n);
  const VectorXd zero = VectorXd::Zero(n);
  for (int k = 0; k < n; ++k) {
    const TreeMotion m = propagate(model, q_m, zero, VectorXd::Unit(n, k), false);
    mm.col(k) = link_torques(model, delta, m);
    mm(k, k) += delta.values()(delta.layout().joint_index(k, kIa));
  }
  return 0.5 * (mm + mm.transpose());
}

double kinetic_energy(const KinematicModel& model, const DynamicParams& delta,
                      const VectorXd& q_m, const VectorXd& qd_m) {
  check_params(model, delta);
  require_size(qd_m.size(), model.n_joints(), "qd_m");
  const TreeMotion m = propagate(model, q_m, qd_m, VectorXd::Zero(model.n_joints()), false);
  double k_total = 0.0;
  const auto& links = model.link_frames();
  for (int k = 0; k < static_cast<int>(links.size()); ++k) {
    const int f = links[k];
    const LinkParams lp = delta.link(k);
    const Mat3 rot = m.poses[f].linear();
    const Vec3 c = rot * lp.M;
    const Mat3 inertia = rot * lp.inertia() * rot.transpose();
    k_total += 0.5 * lp.m * m.v[f].squaredNorm() + m.v[f].dot(m.w[f].cross(c)) +
               0.5 * m.w[f].dot(inertia * m.w[f]);
  }
  for (int j = 0; j < model.n_joints(); ++j) {
    k_total += 0.5 * delta.values()(delta.layout().joint_index(j, kIa)) * qd_m(j) * qd_m(j);
  }
  return k_total;
}

double potential_energy(const KinematicModel& model, const DynamicParams& delta,
                        const VectorXd& q_m) {
  check_params(model, delta);
  const auto poses = forward_kinematics(model, q_m);
  double p = 0.0;
  const auto& links = model.link_frames();
  for (int k = 0; k < static_cast<int>(links.size()); ++k) {
    const LinkParams lp = delta.link(k);
    const Transform& t = poses[links[k]];
    p -= model.gravity().dot(lp.m * t.translation() + t.linear() * lp.M);
  }
  const VectorXd q = model.joint_map() * q_m;
  const ParamLayout& lay = delta.layout();
  const VectorXd& d = delta.values();
  for (int j = 0; j < model.n_joints(); ++j) {
    p += 0.5 * d(lay.joint_index(j, kKs)) * q(j) * q(j) - d(lay.joint_index(j, kKsQ0)) * q(j) +
         d(lay.joint_index(j, kFo)) * q(j);
  }
  return p;
}

VectorXd pseudo_inertia_min_eigs(const DynamicParams& delta) {
  const int nl = delta.layout().n_links();
  VectorXd out(nl);
  for (int i = 0; i < nl; ++i) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(delta.link(i).pseudo_inertia(),
                                                      Eigen::EigenvaluesOnly);
    out(i) = es.eigenvalues()(0);
  }
  return out;
}

FeasibilityReport feasibility_check(const DynamicParams& delta, double eig_tol) {
  FeasibilityReport rep;
  const ParamLayout& lay = delta.layout();
  auto flag = [&](bool ok, std::string what, double margin) {
    if (!ok) {
      rep.feasible = false;
      rep.violations.push_back({std::move(what), margin});
    }
  };
  const VectorXd eigs = pseudo_inertia_min_eigs(delta);
  for (int i = 0; i < lay.n_links(); ++i) {
    const std::string name = lay.names()[lay.link_index(i, kMass)];
    const double m = delta.link(i).m;
    flag(m > 0.0, name + " (link " + std::to_string(i) + " mass) must be positive", m);
    flag(eigs(i) >= -eig_tol,
         "link " + std::to_string(i) + " pseudo-inertia is not positive semidefinite", eigs(i));
  }
  const VectorXd& d = delta.values();
  for (int j = 0; j < lay.n_joints(); ++j) {
    for (JointParam p : {kIa, kFv, kFc}) {
      const int idx = lay.joint_index(j, p);
      flag(d(idx) >= 0.0, lay.names()[idx] + " must be nonnegative", d(idx));
    }
  }
  return rep;
}

DynamicParams random_physical_params(const KinematicModel& model, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DynamicParams delta{ParamLayout(model)};
  for (int i = 0; i < model.n_links(); ++i) {
    const double mass = 0.2 + 2.0 * u(rng);
    const Vec3 com(0.2 * (u(rng) - 0.5), 0.2 * (u(rng) - 0.5), 0.2 * (u(rng) - 0.5));
    // Random rotation of a diagonal inertia that satisfies the triangle inequality.
    const Vec3 axis = Vec3(u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5).normalized();
    const Mat3 rot = Eigen::AngleAxisd(2.0 * 3.141592653589793 * u(rng), axis).toRotationMatrix();
    const double a = 0.01 + 0.05 * u(rng);
    const double b = 0.01 + 0.05 * u(rng);
    const double c = std::abs(a - b) + (a + b - std::abs(a - b)) * (0.1 + 0.8 * u(rng));
    const Mat3 ic = rot * Vec3(a, b, c).asDiagonal() * rot.transpose();
    delta.set_link(i, LinkParams::from_com(mass, com, ic));
  }
  for (int j = 0; j < model.n_joints(); ++j) {
    JointEnvParams p;
    p.I_motor = 0.01 + 0.1 * u(rng);
    p.f_v = 0.05 + 0.2 * u(rng);
    p.f_c = 0.02 + 0.1 * u(rng);
    p.f_o = 0.1 * (u(rng) - 0.5);
    p.k_s = 0.1 * u(rng);
    p.q_s0 = 0.5 * (u(rng) - 0.5);
    delta.set_joint(j, p);
  }
  return delta;
}

}  // namespace hforce
