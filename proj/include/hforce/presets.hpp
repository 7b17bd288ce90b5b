#pragma once

#include "hforce/lagdyn.hpp"

#include <vector>

namespace hforce {

/// Link-length constants of the PSM frame tree (meters).
///
/// These are the nominal dVRK PSM values; they are configuration, not derived here.
struct PsmLengths {
  double l_2L3 = 0.04009;
  double l_2H1 = 0.144;
  double l_2L2 = 0.516;
  double l_3 = 0.04009;
  double l_RCC = 0.4318;
  double l_tool = 0.4162;
  double l_p2y = 0.0091;
  double l_y2ctrl = 0.0102;
};

/// Wrist block of the motor to controller coupling (rows/cols for joints 5..7).
Eigen::Matrix3d psm_wrist_coupling();

/// Seven-motor PSM model: the DH tree with the parallelogram branch frames, the two
/// jaws, the wrist motor rotor frames and the jaw relative-motion frame. Two massless
/// frames are appended: the jaw bisector and the instrument tip.
KinematicModel psm_preset(const PsmLengths& lengths = {});

/// Six-motor remote-centre-of-motion arm used by the simulated experiments: outer
/// yaw, outer pitch, insertion (the shaft axis passes through the base origin),
/// instrument roll, wrist pitch and wrist yaw, plus a massless tip frame.
KinematicModel rcm6_preset();

/// Ground-truth parameters of rcm6 for the simulated experiments. They are plausible
/// desk-scale values for a light arm, not measured ones.
DynamicParams rcm6_true_params(const KinematicModel& rcm6);

/// PD gains that track rcm6 excitation and teleoperation-like motion at a 1 ms step.
void rcm6_default_gains(VectorXd& kp, VectorXd& kd);

/// Planar serial chain of revolute joints about z, links along x; the tip frame sits
/// at the end of the last link.
KinematicModel planar_chain(const std::vector<double>& lengths,
                            const Vec3& gravity = Vec3(0.0, -9.81, 0.0));

}  // namespace hforce
