#include "hforce/presets.hpp"

#include <numbers>

namespace hforce {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kHalfPi = std::numbers::pi / 2.0;

DHFrame base_frame() {
  DHFrame f;
  f.name = "0";
  f.parent = -1;
  f.inertial = false;
  return f;
}

DHFrame revolute(std::string name, int parent, double a, double alpha,
                 std::vector<CoordTerm> terms, double offset, double d = 0.0) {
  DHFrame f;
  f.name = std::move(name);
  f.parent = parent;
  f.a_prev = a;
  f.alpha_prev = alpha;
  f.d = d;
  f.kind = JointKind::kRevolute;
  f.terms = std::move(terms);
  f.offset = offset;
  return f;
}

DHFrame prismatic(std::string name, int parent, double a, double alpha,
                  std::vector<CoordTerm> terms, double offset) {
  DHFrame f;
  f.name = std::move(name);
  f.parent = parent;
  f.a_prev = a;
  f.alpha_prev = alpha;
  f.kind = JointKind::kPrismatic;
  f.terms = std::move(terms);
  f.offset = offset;
  return f;
}

DHFrame fixed(std::string name, int parent, double a, double alpha, double theta,
              bool inertial) {
  DHFrame f;
  f.name = std::move(name);
  f.parent = parent;
  f.a_prev = a;
  f.alpha_prev = alpha;
  f.theta = theta;
  f.kind = JointKind::kFixed;
  f.inertial = inertial;
  return f;
}

}  // namespace

Eigen::Matrix3d psm_wrist_coupling() {
  Eigen::Matrix3d a;
  a << 1.0186, 0.0, 0.0,
      -0.8306, 0.6089, 0.6089,
       0.0, -1.2177, 1.2177;
  return a;
}

KinematicModel psm_preset(const PsmLengths& l) {
  constexpr int n = 7;
  // Complete-coordinate indices: q_i -> i-1, q_m_i -> n + i-1.
  auto q = [](int i) { return i - 1; };
  auto qm = [](int i) { return n + i - 1; };
  const double l_c2 = -l.l_RCC + l.l_2H1;

  std::vector<DHFrame> frames;
  frames.push_back(base_frame());                                                     // 0
  frames.push_back(revolute("1", 0, 0.0, kHalfPi, {{q(1), 1.0}}, kHalfPi));            // 1
  frames.push_back(revolute("2", 1, 0.0, -kHalfPi, {{q(2), 1.0}}, -kHalfPi));          // 2
  frames.push_back(fixed("2'", 2, l.l_2L3, 0.0, kHalfPi, true));                       // 3
  frames.push_back(revolute("2''", 3, l.l_2H1, 0.0, {{q(2), -1.0}}, kHalfPi));         // 4
  frames.push_back(revolute("2'''", 4, l.l_2L2, 0.0, {{q(2), 1.0}}, 0.0));             // 5
  frames.push_back(prismatic("3", 5, l.l_3, -kHalfPi, {{q(3), 1.0}}, l_c2));           // 6
  frames.push_back(prismatic("3'", 2, l.l_2L3, -kHalfPi, {{q(3), 1.0}}, 0.0));         // 7
  frames.push_back(revolute("4", 6, 0.0, 0.0, {{q(4), 1.0}}, 0.0, l.l_tool));          // 8
  frames.push_back(revolute("5", 8, 0.0, kHalfPi, {{q(5), 1.0}}, kHalfPi));            // 9
  frames.push_back(revolute("6", 9, l.l_p2y, -kHalfPi, {{q(6), 1.0}}, kHalfPi));       // 10
  frames.push_back(revolute("7", 9, l.l_p2y, -kHalfPi, {{q(7), 1.0}}, kHalfPi));       // 11
  frames.push_back(revolute("M6", 0, 0.0, 0.0, {{qm(6), 1.0}}, 0.0));                  // 12
  frames.push_back(revolute("M7", 0, 0.0, 0.0, {{qm(7), 1.0}}, 0.0));                  // 13
  frames.push_back(revolute("F67", 0, 0.0, 0.0, {{q(6), 1.0}, {q(7), -1.0}}, 0.0));    // 14
  DHFrame jaw = revolute("jaw", 9, l.l_p2y, -kHalfPi, {{q(6), 0.5}, {q(7), 0.5}}, kHalfPi);
  jaw.inertial = false;
  frames.push_back(jaw);                                                               // 15
  frames.push_back(fixed("tip", 15, l.l_y2ctrl, 0.0, 0.0, false));                     // 16

  CouplingMap coupling = CouplingMap::identity(n);
  coupling.m_to_d.block<3, 3>(4, 4) = psm_wrist_coupling();
  // q6 = qd6 - qd7 / 2, q7 = qd6 + qd7 / 2
  coupling.d_to_q(5, 5) = 1.0;
  coupling.d_to_q(5, 6) = -0.5;
  coupling.d_to_q(6, 5) = 1.0;
  coupling.d_to_q(6, 6) = 0.5;

  KinematicModel model("psm", std::move(frames), n, coupling, 16, Vec3(0.0, 0.0, -9.81));
  VectorXd lo(n), hi(n);
  lo << -1.2, -0.8, 0.05, -2.0, -1.2, -1.2, -1.2;
  hi << 1.2, 0.8, 0.22, 2.0, 1.2, 1.2, 1.2;
  model.set_limits(lo, hi);
  return model;
}

KinematicModel rcm6_preset() {
  constexpr int n = 6;
  const PsmLengths l;
  std::vector<DHFrame> frames;
  frames.push_back(base_frame());
  frames.push_back(revolute("1", 0, 0.0, kHalfPi, {{0, 1.0}}, kHalfPi));
  frames.push_back(revolute("2", 1, 0.0, -kHalfPi, {{1, 1.0}}, -kHalfPi));
  frames.push_back(prismatic("3", 2, 0.0, kHalfPi, {{2, 1.0}}, 0.0));
  frames.push_back(revolute("4", 3, 0.0, 0.0, {{3, 1.0}}, 0.0));
  frames.push_back(revolute("5", 4, 0.0, kHalfPi, {{4, 1.0}}, kHalfPi));
  frames.push_back(revolute("6", 5, l.l_p2y, -kHalfPi, {{5, 1.0}}, kHalfPi));
  frames.push_back(fixed("tip", 6, l.l_y2ctrl, 0.0, 0.0, false));

  KinematicModel model("rcm6", std::move(frames), n, CouplingMap::identity(n), 7,
                       Vec3(0.0, 0.0, -9.81));
  VectorXd lo(n), hi(n);
  lo << -0.8, -0.7, 0.05, -1.5, -1.0, -1.0;
  hi << 0.8, 0.7, 0.18, 1.5, 1.0, 1.0;
  model.set_limits(lo, hi);
  return model;
}

DynamicParams rcm6_true_params(const KinematicModel& rcm6) {
  require(rcm6.n_joints() == 6 && rcm6.n_links() == 6, "expected the rcm6 model");
  DynamicParams delta{ParamLayout(rcm6)};
  const double mass[6] = {2.5, 1.8, 0.6, 0.05, 0.02, 0.01};
  const Vec3 com[6] = {{0.05, 0.0, 0.10}, {0.10, -0.15, 0.0}, {0.0, 0.0, -0.22},
                       {0.0, 0.0, -0.01}, {0.004, 0.0, 0.0}, {0.006, 0.0, 0.0}};
  const Vec3 icom[6] = {{0.02, 0.03, 0.02}, {0.015, 0.01, 0.02}, {0.01, 0.01, 2e-4},
                        {2e-5, 2e-5, 1e-6}, {1e-6, 1e-6, 1e-6}, {5e-7, 5e-7, 5e-7}};
  for (int i = 0; i < 6; ++i) delta.set_link(i, LinkParams::from_com(mass[i], com[i], icom[i].asDiagonal()));
  const double ia[6] = {0.05, 0.05, 0.2, 1e-3, 1e-3, 1e-3};
  const double fv[6] = {0.1, 0.1, 2.0, 0.005, 0.005, 0.005};
  const double fc[6] = {0.05, 0.05, 0.3, 0.005, 0.004, 0.004};
  const double fo[6] = {0.02, -0.03, 0.1, 0.001, 0.0, 0.0};
  const double ks[6] = {0.0, 0.0, 0.0, 0.002, 0.01, 0.01};
  const double qs0[6] = {0.0, 0.0, 0.0, 0.1, -0.05, 0.05};
  for (int j = 0; j < 6; ++j) delta.set_joint(j, {ia[j], fv[j], fc[j], fo[j], ks[j], qs0[j]});
  return delta;
}

void rcm6_default_gains(VectorXd& kp, VectorXd& kd) {
  kp.resize(6);
  kd.resize(6);
  kp << 40.0, 40.0, 300.0, 0.2, 0.2, 0.2;
  kd << 6.0, 6.0, 35.0, 0.03, 0.03, 0.03;
}

KinematicModel planar_chain(const std::vector<double>& lengths, const Vec3& gravity) {
  require(!lengths.empty(), "planar chain needs at least one link");
  const int n = static_cast<int>(lengths.size());
  std::vector<DHFrame> frames;
  frames.push_back(base_frame());
  for (int i = 0; i < n; ++i) {
    const double a = i == 0 ? 0.0 : lengths[i - 1];
    frames.push_back(revolute(std::to_string(i + 1), i, a, 0.0, {{i, 1.0}}, 0.0));
  }
  frames.push_back(fixed("tip", n, lengths.back(), 0.0, 0.0, false));
  KinematicModel model("planar" + std::to_string(n), std::move(frames), n,
                       CouplingMap::identity(n), n + 1, gravity);
  model.set_limits(VectorXd::Constant(n, -kPi), VectorXd::Constant(n, kPi));
  return model;
}

}  // namespace hforce
