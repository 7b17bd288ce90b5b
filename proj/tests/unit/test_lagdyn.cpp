#include "hforce/lagdyn.hpp"
#include "hforce/presets.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace hforce {
namespace {

constexpr double kG = 9.81;

JointState random_state(const KinematicModel& model, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  const int n = model.n_joints();
  JointState s = JointState::zero(n);
  for (int j = 0; j < n; ++j) {
    s.q(j) = model.q_min()(j) + u(rng) * (model.q_max()(j) - model.q_min()(j));
    s.qd(j) = g(rng);
    s.qdd(j) = g(rng);
  }
  return s;
}

double rel_err(const VectorXd& a, const VectorXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1e-300, b.cwiseAbs().maxCoeff());
}

// Textbook single pendulum (rotation about z, gravity along -y, angle from +x):
//   tau = (Lzz + Ia) qdd + g (Mx cos q - My sin q) + fv qd + fc tanh(qd / w) + fo + ks q - ksq0
TEST(Regressor, SinglePendulumClosedForm) {
  const KinematicModel model = planar_chain({0.5});
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double w = DynamicsOptions{}.coulomb_width;
  for (int k = 0; k < 30; ++k) {
    DynamicParams delta = random_physical_params(model, rng);
    JointState s = JointState::zero(1);
    s.q(0) = 3.0 * u(rng);
    s.qd(0) = 2.0 * u(rng);
    s.qdd(0) = 2.0 * u(rng);
    const LinkParams lp = delta.link(0);
    const JointEnvParams jp = delta.joint(0);
    const double expected = (lp.L[5] + jp.I_motor) * s.qdd(0) +
                            kG * (lp.M.x() * std::cos(s.q(0)) - lp.M.y() * std::sin(s.q(0))) +
                            jp.f_v * s.qd(0) + jp.f_c * std::tanh(s.qd(0) / w) + jp.f_o +
                            jp.k_s * (s.q(0) - jp.q_s0);
    const double via_h = (regressor_row_block(model, s) * delta.values())(0);
    EXPECT_LT(std::abs(via_h - expected) / std::abs(expected), 1e-8);
    EXPECT_LT(std::abs(inverse_dynamics(model, delta, s)(0) - expected) / std::abs(expected), 1e-8);
  }
}

// Textbook planar double pendulum with centres of mass on the link x axes.
Eigen::Vector2d double_pendulum_torque(double m1, double c1, double i1, double l1, double m2,
                                       double c2, double i2, const JointState& s) {
  const double q1 = s.q(0), q2 = s.q(1);
  const double m11 = i1 + i2 + m1 * c1 * c1 + m2 * (l1 * l1 + c2 * c2 + 2 * l1 * c2 * std::cos(q2));
  const double m12 = i2 + m2 * (c2 * c2 + l1 * c2 * std::cos(q2));
  const double m22 = i2 + m2 * c2 * c2;
  const double hh = m2 * l1 * c2 * std::sin(q2);
  Eigen::Vector2d tau;
  tau(0) = m11 * s.qdd(0) + m12 * s.qdd(1) - hh * (2 * s.qd(0) * s.qd(1) + s.qd(1) * s.qd(1)) +
           (m1 * c1 + m2 * l1) * kG * std::cos(q1) + m2 * c2 * kG * std::cos(q1 + q2);
  tau(1) = m12 * s.qdd(0) + m22 * s.qdd(1) + hh * s.qd(0) * s.qd(0) +
           m2 * c2 * kG * std::cos(q1 + q2);
  return tau;
}

TEST(InverseDynamics, DoublePendulumClosedForm) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 30; ++k) {
    const double l1 = 0.3 + u(rng);
    const KinematicModel model = planar_chain({l1, 0.5});
    const double m1 = 0.5 + u(rng), c1 = l1 * u(rng), i1 = 0.01 + 0.1 * u(rng);
    const double m2 = 0.5 + u(rng), c2 = 0.5 * u(rng), i2 = 0.01 + 0.1 * u(rng);
    DynamicParams delta{ParamLayout(model)};
    delta.set_link(0, LinkParams::from_com(m1, Vec3(c1, 0, 0), Vec3(i1, i1, i1).asDiagonal()));
    delta.set_link(1, LinkParams::from_com(m2, Vec3(c2, 0, 0), Vec3(i2, i2, i2).asDiagonal()));
    JointState s = JointState::zero(2);
    for (int j = 0; j < 2; ++j) {
      s.q(j) = 6.0 * (u(rng) - 0.5);
      s.qd(j) = 4.0 * (u(rng) - 0.5);
      s.qdd(j) = 4.0 * (u(rng) - 0.5);
    }
    const Eigen::Vector2d expected = double_pendulum_torque(m1, c1, i1, l1, m2, c2, i2, s);
    EXPECT_LT(rel_err(inverse_dynamics(model, delta, s), expected), 1e-8);
    EXPECT_LT(rel_err(regressor_row_block(model, s) * delta.values(), expected), 1e-8);
  }
}

TEST(Regressor, RestWithoutGravityOnlyOffsetColumns) {
  for (const KinematicModel& base : {planar_chain({1.0, 0.5}), psm_preset(), rcm6_preset()}) {
    const KinematicModel model = base.with_gravity(Vec3::Zero());
    JointState s = JointState::zero(model.n_joints());
    // Some presets have q = 0 outside their limits; the regressor does not care.
    const MatrixXd h = regressor_row_block(model, s);
    const ParamLayout lay(model);
    for (int c = 0; c < lay.size(); ++c) {
      const std::string& nm = lay.names()[c];
      const bool offset = nm.ends_with(".fo") || nm.ends_with(".ksq0");
      if (offset) {
        EXPECT_GT(h.col(c).cwiseAbs().maxCoeff(), 0.0) << nm;
      } else {
        EXPECT_EQ(h.col(c).cwiseAbs().maxCoeff(), 0.0) << nm;
      }
    }
  }
}

TEST(Regressor, LinearInParameters) {
  const KinematicModel model = psm_preset();
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int k = 0; k < 20; ++k) {
    const JointState s = random_state(model, rng);
    const MatrixXd h = regressor_row_block(model, s);
    const VectorXd d1 = VectorXd::NullaryExpr(h.cols(), [&] { return g(rng); });
    const VectorXd d2 = VectorXd::NullaryExpr(h.cols(), [&] { return g(rng); });
    EXPECT_TRUE((h * (2.0 * d1)).isApprox(2.0 * (h * d1), 1e-15));
    const VectorXd combo = h * (0.3 * d1 - 1.7 * d2);
    EXPECT_LT(rel_err(combo, 0.3 * (h * d1) - 1.7 * (h * d2)), 1e-12);
  }
}

TEST(InverseDynamics, ZeroParametersGiveZeroTorque) {
  const KinematicModel model = psm_preset();
  std::mt19937_64 rng(5);
  const DynamicParams zero{ParamLayout(model)};
  EXPECT_TRUE(inverse_dynamics(model, zero, random_state(model, rng)).isZero(0.0));
}

TEST(InverseDynamics, MatchesRegressorTimesParameters) {
  std::mt19937_64 rng(6);
  const std::vector<KinematicModel> models = {psm_preset(), rcm6_preset(),
                                              planar_chain({0.4, 0.3, 0.2})};
  for (int k = 0; k < 100; ++k) {
    const KinematicModel& model = models[k % models.size()];
    const DynamicParams delta = random_physical_params(model, rng);
    const JointState s = random_state(model, rng);
    EXPECT_LT(rel_err(regressor_row_block(model, s) * delta.values(),
                      inverse_dynamics(model, delta, s)),
              1e-11)
        << model.name();
  }
}

TEST(Regressor, ClosedFormMatchesPerParameterReference) {
  std::mt19937_64 rng(8);
  for (const KinematicModel& model : {psm_preset(), rcm6_preset(), planar_chain({1.0, 0.5})}) {
    for (int k = 0; k < 10; ++k) {
      const JointState s = random_state(model, rng);
      const MatrixXd fast = regressor_row_block(model, s);
      const MatrixXd ref = regressor_reference(model, s);
      EXPECT_LT((fast - ref).cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, ref.cwiseAbs().maxCoeff()))
          << model.name();
    }
  }
}

TEST(InverseDynamics, GravityTorqueIsPotentialGradient) {
  std::mt19937_64 rng(9);
  for (const KinematicModel& model : {psm_preset(), rcm6_preset()}) {
    for (int k = 0; k < 10; ++k) {
      const DynamicParams delta = random_physical_params(model, rng);
      JointState s = random_state(model, rng);
      s.qd.setZero();
      s.qdd.setZero();
      // Coulomb friction vanishes at rest; the rest of tau(q, 0, 0) is conservative.
      const VectorXd tau = inverse_dynamics(model, delta, s);
      VectorXd grad(model.n_joints());
      const double h = 1e-6;
      for (int j = 0; j < model.n_joints(); ++j) {
        VectorXd qp = s.q, qm = s.q;
        qp(j) += h;
        qm(j) -= h;
        grad(j) = (potential_energy(model, delta, qp) - potential_energy(model, delta, qm)) / (2 * h);
      }
      EXPECT_LT(rel_err(grad, tau), 1e-6) << model.name();
    }
  }
}

TEST(InverseDynamics, MassMatrixSplitsTorque) {
  std::mt19937_64 rng(10);
  const KinematicModel model = psm_preset();
  for (int k = 0; k < 10; ++k) {
    const DynamicParams delta = random_physical_params(model, rng);
    const JointState s = random_state(model, rng);
    JointState no_acc = s;
    no_acc.qdd.setZero();
    const MatrixXd m = mass_matrix(model, delta, s.q);
    const VectorXd lhs = m * s.qdd + inverse_dynamics(model, delta, no_acc);
    EXPECT_LT(rel_err(lhs, inverse_dynamics(model, delta, s)), 1e-11);
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<MatrixXd>(m).eigenvalues().minCoeff(), 0.0);
  }
}

// Power balance along a prescribed smooth trajectory: the work done by the joint
// torques equals the change in kinetic plus potential energy (friction off).
TEST(InverseDynamics, PowerBalanceAlongTrajectory) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (const KinematicModel& model : {rcm6_preset(), planar_chain({0.6, 0.4})}) {
    DynamicParams delta = random_physical_params(model, rng);
    const int n = model.n_joints();
    for (int j = 0; j < n; ++j) {
      JointEnvParams p = delta.joint(j);
      p.f_v = 0.0;
      p.f_c = 0.0;
      delta.set_joint(j, p);
    }
    VectorXd amp(n), freq(n), phase(n), mid(n);
    for (int j = 0; j < n; ++j) {
      mid(j) = 0.5 * (model.q_min()(j) + model.q_max()(j));
      amp(j) = 0.2 * (model.q_max()(j) - model.q_min()(j)) * (0.5 + 0.5 * std::abs(u(rng)));
      freq(j) = 1.0 + 2.0 * std::abs(u(rng));
      phase(j) = 3.0 * u(rng);
    }
    auto state_at = [&](double t) {
      JointState s = JointState::zero(n);
      for (int j = 0; j < n; ++j) {
        const double ph = freq(j) * t + phase(j);
        s.q(j) = mid(j) + amp(j) * std::sin(ph);
        s.qd(j) = amp(j) * freq(j) * std::cos(ph);
        s.qdd(j) = -amp(j) * freq(j) * freq(j) * std::sin(ph);
      }
      return s;
    };
    auto power = [&](double t) {
      const JointState s = state_at(t);
      return inverse_dynamics(model, delta, s).dot(s.qd);
    };
    auto energy = [&](double t) {
      const JointState s = state_at(t);
      return kinetic_energy(model, delta, s.q, s.qd) + potential_energy(model, delta, s.q);
    };
    const double dt = 1e-4;
    const int steps = 10000;
    double work = 0.0, max_de = 0.0;
    const double e0 = energy(0.0);
    for (int i = 0; i < steps; ++i) {
      const double t = i * dt;
      // RK4 on dW/dt = P(t) reduces to Simpson's rule on each step.
      work += dt / 6.0 * (power(t) + 4.0 * power(t + 0.5 * dt) + power(t + dt));
      if (i % 100 == 99) max_de = std::max(max_de, std::abs(energy(t + dt) - e0));
    }
    const double de = energy(steps * dt) - e0;
    EXPECT_LT(std::abs(work - de) / max_de, 1e-4) << model.name();
  }
}

TEST(SmoothCoulomb, OddSaturatingAndZeroAtRest) {
  const double w = 0.01;
  EXPECT_EQ(smooth_coulomb(0.0, w), 0.0);
  EXPECT_GE(smooth_coulomb(10 * w, w), 0.999);
  EXPECT_GE(smooth_coulomb(5 * w, w), 1.0 - 1e-3);
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g(0.0, 0.05);
  double prev = -1.0;
  for (int k = 0; k < 200; ++k) {
    const double x = g(rng);
    EXPECT_EQ(smooth_coulomb(-x, w), -smooth_coulomb(x, w));
    EXPECT_LE(std::abs(smooth_coulomb(x, w)), 1.0);
  }
  for (double x = -0.1; x <= 0.1; x += 1e-3) {
    EXPECT_GE(smooth_coulomb(x, w), prev);
    prev = smooth_coulomb(x, w);
  }
  EXPECT_THROW(smooth_coulomb(1.0, 0.0), Error);
}

TEST(Feasibility, PointMassesAreFeasible) {
  const KinematicModel model = rcm6_preset();
  DynamicParams delta{ParamLayout(model)};
  for (int i = 0; i < model.n_links(); ++i) {
    delta.set_link(i, LinkParams::from_com(1.0, Vec3(0.1 * i, -0.05, 0.02), Mat3::Zero()));
  }
  const FeasibilityReport rep = feasibility_check(delta);
  EXPECT_TRUE(rep.feasible);
  EXPECT_TRUE(rep.violations.empty());
}

TEST(Feasibility, NegativeMassIsNamed) {
  const KinematicModel model = rcm6_preset();
  std::mt19937_64 rng(14);
  DynamicParams delta = random_physical_params(model, rng);
  LinkParams lp = delta.link(2);
  lp.m = -0.1;
  delta.set_link(2, lp);
  const FeasibilityReport rep = feasibility_check(delta);
  EXPECT_FALSE(rep.feasible);
  bool named = false;
  for (const auto& v : rep.violations) {
    if (v.what.find("link 2 mass") != std::string::npos) {
      named = true;
      EXPECT_DOUBLE_EQ(v.margin, -0.1);
    }
  }
  EXPECT_TRUE(named);
}

TEST(Feasibility, IndefinitePseudoInertia) {
  const KinematicModel model = planar_chain({1.0});
  DynamicParams delta{ParamLayout(model)};
  LinkParams lp;
  lp.L = {1.0, 0.0, 0.0, 1.0, 0.0, -0.5};
  lp.m = 1.0;
  delta.set_link(0, lp);
  // tr(L)/2 = 0.75, so the top-left block is diag(-0.25, -0.25, 1.25).
  EXPECT_NEAR(pseudo_inertia_min_eigs(delta)(0), -0.25, 1e-12);
  EXPECT_FALSE(feasibility_check(delta).feasible);
}

TEST(Feasibility, NegativeFrictionFlagged) {
  const KinematicModel model = planar_chain({1.0});
  std::mt19937_64 rng(15);
  DynamicParams delta = random_physical_params(model, rng);
  JointEnvParams jp = delta.joint(0);
  jp.f_v = -0.01;
  delta.set_joint(0, jp);
  const FeasibilityReport rep = feasibility_check(delta);
  ASSERT_EQ(rep.violations.size(), 1u);
  EXPECT_NE(rep.violations[0].what.find("fv"), std::string::npos);
}

TEST(InverseDynamics, DimensionMismatchThrows) {
  const KinematicModel model = planar_chain({1.0, 1.0});
  const DynamicParams delta{ParamLayout(model)};
  EXPECT_THROW(inverse_dynamics(model, delta, JointState::zero(3)), Error);
  EXPECT_THROW(regressor_row_block(model, JointState::zero(1)), Error);
}

}  // namespace
}  // namespace hforce
