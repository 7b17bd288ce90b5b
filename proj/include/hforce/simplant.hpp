#pragma once

// Ground-truth plant: forward dynamics of a chain with known parameters, a
// lateral spring-damper at the trocar port, scripted tip forces, PD tracking
// and sensor noise.

#include "hforce/sysid.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace hforce {

struct TrocarConfig {
  bool enabled = false;
  Vec3 port = Vec3::Zero();
  int shaft_frame = -1;  // frame whose z axis is the instrument shaft
  double k_t = 200.0;    // N/m
  double c_t = 2.0;      // N s/m
};

struct NoiseConfig {
  double tau_std = 0.0;       // N m (or N), every joint
  VectorXd tau_std_joint;     // per-joint override when non-empty
  double tau_rel = 0.0;       // extra std as a fraction of each clean channel's RMS
  double qd_std = 0.0;
};

/// Piecewise-linear force applied by the instrument tip on its surroundings.
struct ContactScript {
  std::vector<double> t;
  std::vector<Vec3> force;

  bool empty() const { return t.empty(); }
  Vec3 at(double time) const;
  void validate() const;
};

struct PdGains {
  VectorXd kp;
  VectorXd kd;
  bool gravity_ff = true;
};

struct PlantConfig {
  KinematicModel model;
  DynamicParams delta;
  TrocarConfig trocar;
  NoiseConfig noise;
  PdGains gains;
  double dt = 1e-3;
  DynamicsOptions dyn;

  void validate() const;
};

struct PlantState {
  double t = 0.0;
  VectorXd q;
  VectorXd qd;
};

using TorqueFn = std::function<VectorXd(double t, const VectorXd& q, const VectorXd& qd)>;
using Reference = std::function<JointState(double t)>;

/// Closest point of the shaft axis to the port, and its lateral offset from the port.
struct TrocarContact {
  Vec3 point;
  Vec3 offset;
};
TrocarContact trocar_contact(const PlantConfig& cfg, const std::vector<Transform>& poses);

/// Motor torque that holds the shaft against the port spring-damper.
VectorXd trocar_torque(const PlantConfig& cfg, const VectorXd& q, const VectorXd& qd);

/// Motor torque that produces force F at the tip.
VectorXd tip_force_torque(const KinematicModel& model, const VectorXd& q, const Vec3& force);

/// Solves M qdd = tau - h - tau_trocar - J^T F_tip.
VectorXd forward_dynamics(const PlantConfig& cfg, const VectorXd& q, const VectorXd& qd,
                          const VectorXd& tau, const Vec3& tip_force = Vec3::Zero());

/// One RK4 step of length dt; torque and contact are sampled at the stage times.
PlantState rk4_step(const PlantConfig& cfg, const PlantState& s, double dt, const TorqueFn& torque,
                    const ContactScript* contact = nullptr);

double total_energy(const PlantConfig& cfg, const VectorXd& q, const VectorXd& qd);

/// PD tracking torque (plus gravity feedforward at the measured position).
VectorXd pd_torque(const PlantConfig& cfg, const JointState& ref, const VectorXd& q,
                   const VectorXd& qd);

struct GenerateOptions {
  double duration = 10.0;  // s
  double rate = 200.0;     // Hz
  std::uint64_t seed = 0;
  bool log_qdd = false;
  const ContactScript* contact = nullptr;
};

struct GeneratedData {
  SampleLog log;
  MatrixXd tau_clean;  // rows aligned with log
  MatrixXd qd_clean;
  MatrixXd force;      // applied tip force, rows aligned with log
};

/// Closed-loop PD tracking of `reference`, logged at `rate` with noise added afterwards.
GeneratedData generate_dataset(const PlantConfig& cfg, const Reference& reference,
                               const GenerateOptions& opts);

/// Gaussian noise on the logged torque and velocity; deterministic in `seed`.
void apply_noise(GeneratedData& data, const NoiseConfig& noise, std::uint64_t seed);

}  // namespace hforce
