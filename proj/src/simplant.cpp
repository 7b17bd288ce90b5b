#include "hforce/simplant.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace hforce {

Vec3 ContactScript::at(double time) const {
  if (t.empty()) return Vec3::Zero();
  if (time <= t.front()) return force.front();
  if (time >= t.back()) return force.back();
  const auto it = std::upper_bound(t.begin(), t.end(), time);
  const std::size_t i = static_cast<std::size_t>(it - t.begin());
  const double s = (time - t[i - 1]) / (t[i] - t[i - 1]);
  return (1.0 - s) * force[i - 1] + s * force[i];
}

void ContactScript::validate() const {
  require(t.size() == force.size(), "contact script times and forces differ in length",
          ErrorKind::kConfig);
  for (std::size_t i = 1; i < t.size(); ++i) {
    require(t[i] > t[i - 1], "contact script times must increase", ErrorKind::kConfig);
  }
  for (const Vec3& f : force) require(f.allFinite(), "contact force must be finite", ErrorKind::kConfig);
}

void PlantConfig::validate() const {
  const auto cfg = ErrorKind::kConfig;
  const int n = model.n_joints();
  require(delta.size() == ParamLayout(model).size(), "plant parameters do not match the model", cfg);
  require(feasibility_check(delta).feasible, "plant parameters are not physically consistent", cfg);
  require(dt > 0.0, "integrator step must be positive", cfg);
  require(trocar.k_t >= 0.0 && trocar.c_t >= 0.0, "trocar stiffness and damping must be >= 0", cfg);
  if (trocar.enabled) {
    require(trocar.shaft_frame > 0 && trocar.shaft_frame < model.n_frames(),
            "trocar shaft frame out of range", cfg);
  }
  require(gains.kp.size() == 0 || gains.kp.size() == n, "kp length must match the joints", cfg);
  require(gains.kd.size() == 0 || gains.kd.size() == n, "kd length must match the joints", cfg);
}

TrocarContact trocar_contact(const PlantConfig& cfg, const std::vector<Transform>& poses) {
  const Transform& shaft = poses[cfg.trocar.shaft_frame];
  const Vec3 o = shaft.translation();
  const Vec3 z = shaft.linear().col(2);
  TrocarContact c;
  c.point = o + z * z.dot(cfg.trocar.port - o);
  c.offset = c.point - cfg.trocar.port;
  return c;
}

VectorXd trocar_torque(const PlantConfig& cfg, const VectorXd& q, const VectorXd& qd) {
  const int n = cfg.model.n_joints();
  if (!cfg.trocar.enabled) return VectorXd::Zero(n);
  const auto poses = forward_kinematics(cfg.model, q);
  const TrocarContact c = trocar_contact(cfg, poses);
  const Mat6X jac = point_jacobian(cfg.model, poses, cfg.trocar.shaft_frame, c.point);
  const Vec3 z = poses[cfg.trocar.shaft_frame].linear().col(2);
  const Vec3 v = jac.topRows<3>() * qd;
  const Vec3 v_lat = v - z * z.dot(v);
  // Force the port exerts on the shaft is -(k e + c v); the motors supply the opposite.
  const Vec3 hold = cfg.trocar.k_t * c.offset + cfg.trocar.c_t * v_lat;
  return jac.topRows<3>().transpose() * hold;
}

VectorXd tip_force_torque(const KinematicModel& model, const VectorXd& q, const Vec3& force) {
  return spatial_jacobian(model, q).topRows<3>().transpose() * force;
}

VectorXd forward_dynamics(const PlantConfig& cfg, const VectorXd& q, const VectorXd& qd,
                          const VectorXd& tau, const Vec3& tip_force) {
  const int n = cfg.model.n_joints();
  require_size(tau.size(), n, "tau");
  const MatrixXd m = mass_matrix(cfg.model, cfg.delta, q);
  const JointState s{q, qd, VectorXd::Zero(n)};
  VectorXd rhs = tau - inverse_dynamics(cfg.model, cfg.delta, s, cfg.dyn);
  if (cfg.trocar.enabled) rhs -= trocar_torque(cfg, q, qd);
  if (!tip_force.isZero(0.0)) rhs -= tip_force_torque(cfg.model, q, tip_force);
  const Eigen::LLT<MatrixXd> llt(m);
  require(llt.info() == Eigen::Success, "mass matrix is not positive definite", ErrorKind::kNumerical);
  return llt.solve(rhs);
}

PlantState rk4_step(const PlantConfig& cfg, const PlantState& s, double dt, const TorqueFn& torque,
                    const ContactScript* contact) {
  auto deriv = [&](double t, const VectorXd& q, const VectorXd& qd) {
    const Vec3 f = contact ? contact->at(t) : Vec3::Zero();
    return forward_dynamics(cfg, q, qd, torque(t, q, qd), f);
  };
  const double h = dt;
  const VectorXd k1q = s.qd;
  const VectorXd k1v = deriv(s.t, s.q, s.qd);
  const VectorXd k2q = s.qd + 0.5 * h * k1v;
  const VectorXd k2v = deriv(s.t + 0.5 * h, s.q + 0.5 * h * k1q, k2q);
  const VectorXd k3q = s.qd + 0.5 * h * k2v;
  const VectorXd k3v = deriv(s.t + 0.5 * h, s.q + 0.5 * h * k2q, k3q);
  const VectorXd k4q = s.qd + h * k3v;
  const VectorXd k4v = deriv(s.t + h, s.q + h * k3q, k4q);
  PlantState out;
  out.t = s.t + h;
  out.q = s.q + h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
  out.qd = s.qd + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
  return out;
}

double total_energy(const PlantConfig& cfg, const VectorXd& q, const VectorXd& qd) {
  return kinetic_energy(cfg.model, cfg.delta, q, qd) + potential_energy(cfg.model, cfg.delta, q);
}

VectorXd pd_torque(const PlantConfig& cfg, const JointState& ref, const VectorXd& q,
                   const VectorXd& qd) {
  const int n = cfg.model.n_joints();
  VectorXd tau = VectorXd::Zero(n);
  if (cfg.gains.kp.size() == n) tau += cfg.gains.kp.cwiseProduct(ref.q - q);
  if (cfg.gains.kd.size() == n) tau += cfg.gains.kd.cwiseProduct(ref.qd - qd);
  if (cfg.gains.gravity_ff) {
    tau += inverse_dynamics(cfg.model, cfg.delta, JointState{q, VectorXd::Zero(n), VectorXd::Zero(n)},
                            cfg.dyn);
  }
  return tau;
}

GeneratedData generate_dataset(const PlantConfig& cfg, const Reference& reference,
                               const GenerateOptions& opts) {
  cfg.validate();
  if (opts.contact) opts.contact->validate();
  require(opts.rate > 0.0 && opts.duration > 0.0, "rate and duration must be positive",
          ErrorKind::kConfig);
  const double ratio = 1.0 / (opts.rate * cfg.dt);
  const int substeps = static_cast<int>(std::lround(ratio));
  require(substeps >= 1 && std::abs(ratio - substeps) < 1e-9 * ratio,
          "log rate must divide the integrator rate", ErrorKind::kConfig);
  const int n = cfg.model.n_joints();
  const int rows = static_cast<int>(std::lround(opts.duration * opts.rate));
  require(rows >= 1, "duration too short for one sample", ErrorKind::kConfig);

  GeneratedData out;
  SampleLog& log = out.log;
  log.t.resize(rows);
  log.q.resize(rows, n);
  log.qd.resize(rows, n);
  log.tau.resize(rows, n);
  if (opts.log_qdd) log.qdd.resize(rows, n);
  out.force.resize(rows, 3);

  const JointState r0 = reference(0.0);
  PlantState s{0.0, r0.q, r0.qd};
  for (int i = 0; i < rows; ++i) {
    const double t_log = i / opts.rate;
    for (int k = 0; k < substeps; ++k) {
      const double t = t_log + k * cfg.dt;
      s.t = t;
      // Zero-order hold of the controller over one integrator step.
      const VectorXd tau = pd_torque(cfg, reference(t), s.q, s.qd);
      if (k == 0) {
        const Vec3 f = opts.contact ? opts.contact->at(t) : Vec3::Zero();
        log.t(i) = t_log;
        log.q.row(i) = s.q.transpose();
        log.qd.row(i) = s.qd.transpose();
        log.tau.row(i) = tau.transpose();
        out.force.row(i) = f.transpose();
        if (opts.log_qdd) log.qdd.row(i) = forward_dynamics(cfg, s.q, s.qd, tau, f).transpose();
      }
      const TorqueFn held = [&tau](double, const VectorXd&, const VectorXd&) { return tau; };
      s = rk4_step(cfg, s, cfg.dt, held, opts.contact);
      if (!s.q.allFinite() || !s.qd.allFinite() || s.qd.cwiseAbs().maxCoeff() > 1e3) {
        throw Error(ErrorKind::kNumerical,
                    "tracking diverged at t = " + std::to_string(s.t) + " s; check the PD gains");
      }
    }
  }
  out.tau_clean = log.tau;
  out.qd_clean = log.qd;
  apply_noise(out, cfg.noise, opts.seed);
  return out;
}

void apply_noise(GeneratedData& data, const NoiseConfig& noise, std::uint64_t seed) {
  SampleLog& log = data.log;
  const int n = log.n_joints();
  const int rows = log.n_samples();
  require(noise.tau_std_joint.size() == 0 || noise.tau_std_joint.size() == n,
          "per-joint noise vector length must match the joints", ErrorKind::kConfig);
  VectorXd sigma(n);
  for (int j = 0; j < n; ++j) {
    const double base = noise.tau_std_joint.size() == n ? noise.tau_std_joint(j) : noise.tau_std;
    const double rms = std::sqrt(data.tau_clean.col(j).squaredNorm() / std::max(rows, 1));
    sigma(j) = base + noise.tau_rel * rms;
  }
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> g(0.0, 1.0);
  log.tau = data.tau_clean;
  if ((sigma.array() > 0.0).any()) {
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < n; ++j) log.tau(i, j) += sigma(j) * g(rng);
    }
  }
  log.qd = data.qd_clean;
  if (noise.qd_std > 0.0) {
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < n; ++j) log.qd(i, j) += noise.qd_std * g(rng);
    }
  }
}

}  // namespace hforce
