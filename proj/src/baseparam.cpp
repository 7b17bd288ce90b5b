#include "hforce/baseparam.hpp"

#include <cmath>
#include <random>

namespace hforce {

std::vector<JointState> probe_states(const KinematicModel& model, int n_probe, std::uint64_t seed,
                                     const ProbeOptions& opts) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  const int n = model.n_joints();
  std::vector<JointState> out;
  out.reserve(n_probe);
  for (int k = 0; k < n_probe; ++k) {
    JointState s = JointState::zero(n);
    for (int j = 0; j < n; ++j) {
      s.q(j) = model.q_min()(j) + u(rng) * (model.q_max()(j) - model.q_min()(j));
      s.qd(j) = opts.qd_sigma * g(rng);
      s.qdd(j) = opts.qdd_sigma * g(rng);
    }
    out.push_back(std::move(s));
  }
  return out;
}

MatrixXd stacked_regressor(const KinematicModel& model, const std::vector<JointState>& states,
                           const DynamicsOptions& dyn) {
  const int n = model.n_joints();
  const int cols = ParamLayout(model).size();
  MatrixXd w(n * static_cast<Eigen::Index>(states.size()), cols);
  for (std::size_t k = 0; k < states.size(); ++k) {
    w.middleRows(n * k, n) = regressor_row_block(model, states[k], dyn);
  }
  return w;
}

BaseReduction reduce_from_matrix(const MatrixXd& w, double tol) {
  require(tol > 0.0, "rank tolerance must be positive");
  require(w.rows() >= w.cols(), "too few regressor rows for the base reduction");
  const int nd = static_cast<int>(w.cols());
  Eigen::ColPivHouseholderQR<MatrixXd> qr(w);
  const MatrixXd r = qr.matrixR().topRows(nd).triangularView<Eigen::Upper>();
  const double r11 = std::abs(r(0, 0));
  int b = 0;
  while (b < nd && std::abs(r(b, b)) > tol * r11) ++b;
  require(b > 0, "regressor has numerical rank 0", ErrorKind::kData);

  BaseReduction red;
  red.tol = tol;
  red.b = b;
  red.perm.resize(nd);
  for (int k = 0; k < nd; ++k) red.perm[k] = qr.colsPermutation().indices()(k);

  const MatrixXd beta = r.topLeftCorner(b, b).triangularView<Eigen::Upper>().solve(
      r.topRightCorner(b, nd - b));
  red.recombine = MatrixXd::Zero(b, nd);
  for (int k = 0; k < b; ++k) red.recombine(k, red.perm[k]) = 1.0;
  for (int k = 0; k < nd - b; ++k) {
    for (int i = 0; i < b; ++i) {
      // Entries at round-off level only clutter the printed grouping.
      const double v = beta(i, k);
      red.recombine(i, red.perm[b + k]) = std::abs(v) < 1e-13 ? 0.0 : v;
    }
  }
  return red;
}

BaseReduction compute_base_reduction(const KinematicModel& model, int n_probe,
                                     std::uint64_t seed, double tol, const ProbeOptions& opts) {
  const int nd = ParamLayout(model).size();
  require(static_cast<long>(n_probe) * model.n_joints() >= nd,
          "need n_probe * n_joints >= n_delta probe rows (" + std::to_string(nd) + ")");
  BaseReduction red = reduce_from_matrix(
      stacked_regressor(model, probe_states(model, n_probe, seed, opts)), tol);
  red.seed = seed;
  red.n_probe = n_probe;
  return red;
}

MatrixXd reduce_regressor(const BaseReduction& red, const MatrixXd& h) {
  require_size(h.cols(), red.n_params(), "regressor columns");
  MatrixXd out(h.rows(), red.b);
  for (int k = 0; k < red.b; ++k) out.col(k) = h.col(red.perm[k]);
  return out;
}

VectorXd base_params(const BaseReduction& red, const VectorXd& delta) {
  require_size(delta.size(), red.n_params(), "delta");
  return red.recombine * delta;
}

}  // namespace hforce
