#include "hforce/sysid.hpp"
#include "hforce/excite.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace hforce {

JointState SampleLog::state(int i) const {
  JointState s{q.row(i).transpose(), qd.row(i).transpose(),
               has_qdd() ? VectorXd(qdd.row(i).transpose()) : VectorXd::Zero(q.cols())};
  return s;
}

SampleLog SampleLog::slice(int begin, int end) const {
  require(0 <= begin && begin <= end && end <= n_samples(), "log slice out of range");
  const int len = end - begin;
  SampleLog out;
  out.t = t.segment(begin, len);
  out.q = q.middleRows(begin, len);
  out.qd = qd.middleRows(begin, len);
  out.tau = tau.middleRows(begin, len);
  if (has_qdd()) out.qdd = qdd.middleRows(begin, len);
  return out;
}

void validate_log(const SampleLog& log) {
  const auto n = log.t.size();
  const auto dat = ErrorKind::kData;
  require(n >= 1, "log has no samples", dat);
  require(log.q.rows() == n && log.qd.rows() == n && log.tau.rows() == n,
          "log channels have different lengths", dat);
  require(log.qd.cols() == log.q.cols() && log.tau.cols() == log.q.cols(),
          "log channels have different joint counts", dat);
  if (log.has_qdd()) {
    require(log.qdd.rows() == n && log.qdd.cols() == log.q.cols(), "qdd channel shape mismatch", dat);
  }
  for (Eigen::Index i = 1; i < n; ++i) {
    require(log.t(i) > log.t(i - 1), "log time stamps must be strictly increasing", dat);
  }
}

double uniform_rate(const VectorXd& t) {
  require(t.size() >= 2, "need at least two time stamps", ErrorKind::kData);
  std::vector<double> dt(t.size() - 1);
  for (Eigen::Index i = 0; i + 1 < t.size(); ++i) dt[i] = t(i + 1) - t(i);
  std::vector<double> sorted = dt;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double med = sorted[sorted.size() / 2];
  require(med > 0.0, "time stamps must increase", ErrorKind::kData);
  for (double d : dt) {
    require(std::abs(d - med) < 0.01 * med, "sample spacing jitters by 1% or more", ErrorKind::kData);
  }
  return 1.0 / med;
}

namespace {

// Direct-form II transposed section of order <= 2 (a[0] == 1).
struct Section {
  double b[3] = {0, 0, 0};
  double a[3] = {1, 0, 0};

  void run(std::vector<double>& x) const {
    // Steady state for a constant input x[0]; the DC gain of every section is 1.
    const double x0 = x.front();
    double z2 = b[2] * x0 - a[2] * x0;
    double z1 = b[1] * x0 - a[1] * x0 + z2;
    for (double& v : x) {
      const double in = v;
      const double y = b[0] * in + z1;
      z1 = b[1] * in - a[1] * y + z2;
      z2 = b[2] * in - a[2] * y;
      v = y;
    }
  }
};

std::vector<Section> butterworth3(double fs, double fc) {
  const double k = 2.0 * fs;
  const double om = k * std::tan(std::numbers::pi * fc / fs);  // prewarped cutoff
  Section first;
  first.b[0] = first.b[1] = om / (k + om);
  first.a[1] = (om - k) / (k + om);
  // Complex pole pair of the third-order prototype: s^2 + om s + om^2.
  Section second;
  const double a0 = k * k + om * k + om * om;
  second.b[0] = om * om / a0;
  second.b[1] = 2.0 * om * om / a0;
  second.b[2] = om * om / a0;
  second.a[1] = (2.0 * om * om - 2.0 * k * k) / a0;
  second.a[2] = (k * k - om * k + om * om) / a0;
  return {first, second};
}

constexpr int kMinLength = 24;

}  // namespace

VectorXd lowpass_filter(const VectorXd& x, double fs, double fc) {
  require(fs > 0.0 && fc > 0.0 && fc < 0.5 * fs, "cutoff must satisfy 0 < fc < fs / 2");
  const auto n = x.size();
  require(n >= kMinLength, "series too short to filter (need at least 24 samples)", ErrorKind::kData);
  const auto sections = butterworth3(fs, fc);
  // Odd extension at both ends, about three cutoff periods long, absorbs the start-up
  // transients of each pass.
  const int kPad = static_cast<int>(std::min<Eigen::Index>(
      n - 1, std::max(12, static_cast<int>(std::ceil(3.0 * fs / fc)))));
  std::vector<double> buf(n + 2 * kPad);
  for (int i = 0; i < kPad; ++i) buf[i] = 2.0 * x(0) - x(kPad - i);
  for (Eigen::Index i = 0; i < n; ++i) buf[kPad + i] = x(i);
  for (int i = 0; i < kPad; ++i) buf[kPad + n + i] = 2.0 * x(n - 1) - x(n - 2 - i);
  for (const Section& s : sections) s.run(buf);
  std::reverse(buf.begin(), buf.end());
  for (const Section& s : sections) s.run(buf);
  std::reverse(buf.begin(), buf.end());
  return Eigen::Map<const VectorXd>(buf.data() + kPad, n);
}

MatrixXd lowpass_filter_columns(const MatrixXd& x, double fs, double fc) {
  MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) out.col(c) = lowpass_filter(x.col(c), fs, fc);
  return out;
}

VectorXd differentiate(const VectorXd& x, const VectorXd& t) {
  const auto n = x.size();
  require(n >= 3, "need at least three samples to differentiate", ErrorKind::kData);
  require_size(t.size(), n, "time vector");
  uniform_rate(t);
  VectorXd d(n);
  for (Eigen::Index i = 1; i + 1 < n; ++i) d(i) = (x(i + 1) - x(i - 1)) / (t(i + 1) - t(i - 1));
  const double h0 = 0.5 * (t(2) - t(0));
  const double h1 = 0.5 * (t(n - 1) - t(n - 3));
  d(0) = (-3.0 * x(0) + 4.0 * x(1) - x(2)) / (2.0 * h0);
  d(n - 1) = (3.0 * x(n - 1) - 4.0 * x(n - 2) + x(n - 3)) / (2.0 * h1);
  return d;
}

PreparedLog preprocess(const SampleLog& log, const IdentifyOptions& opts) {
  validate_log(log);
  PreparedLog p;
  const int n = log.n_joints();
  if (opts.fc > 0.0) {
    const double fs = uniform_rate(log.t);
    p.q = opts.filter_q ? lowpass_filter_columns(log.q, fs, opts.fc) : log.q;
    p.qd = lowpass_filter_columns(log.qd, fs, opts.fc);
    p.tau = lowpass_filter_columns(log.tau, fs, opts.fc);
    p.qdd.resize(log.n_samples(), n);
    for (int j = 0; j < n; ++j) p.qdd.col(j) = differentiate(p.qd.col(j), log.t);
  } else {
    p.q = log.q;
    p.qd = log.qd;
    p.tau = log.tau;
    if (log.has_qdd() && opts.use_logged_qdd) {
      p.qdd = log.qdd;
    } else {
      p.qdd.resize(log.n_samples(), n);
      for (int j = 0; j < n; ++j) p.qdd.col(j) = differentiate(log.qd.col(j), log.t);
    }
  }
  return p;
}

WeightedLsResult solve_weighted_ls(const MatrixXd& w, const VectorXd& tau, int n_joints) {
  require(n_joints >= 1 && w.rows() % n_joints == 0, "row count must be a multiple of n_joints");
  require_size(tau.size(), w.rows(), "stacked torque");
  const Eigen::Index ns = w.rows() / n_joints;
  WeightedLsResult res;
  res.weights.resize(n_joints);
  for (int j = 0; j < n_joints; ++j) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (Eigen::Index i = 0; i < ns; ++i) {
      lo = std::min(lo, tau(i * n_joints + j));
      hi = std::max(hi, tau(i * n_joints + j));
    }
    require(hi > lo, "joint " + std::to_string(j + 1) + " torque is constant; its weight is undefined",
            ErrorKind::kData);
    res.weights(j) = 1.0 / (hi - lo);
  }
  MatrixXd ww = w;
  VectorXd tw = tau;
  for (Eigen::Index i = 0; i < ns; ++i) {
    for (int j = 0; j < n_joints; ++j) {
      ww.row(i * n_joints + j) *= res.weights(j);
      tw(i * n_joints + j) *= res.weights(j);
    }
  }
  res.cond = condition_number(ww);
  require(std::isfinite(res.cond) && res.cond < 1e12,
          "weighted regressor is rank deficient (condition number " + std::to_string(res.cond) + ")",
          ErrorKind::kData);
  res.x = ww.colPivHouseholderQr().solve(tw);
  const VectorXd r = tau - w * res.x;
  res.residual_rms = VectorXd::Zero(n_joints);
  for (Eigen::Index i = 0; i < ns; ++i) {
    for (int j = 0; j < n_joints; ++j) res.residual_rms(j) += r(i * n_joints + j) * r(i * n_joints + j);
  }
  res.residual_rms = (res.residual_rms / static_cast<double>(ns)).cwiseSqrt();
  return res;
}

void stack_problem(const KinematicModel& model, const BaseReduction* red, const PreparedLog& data,
                   const DynamicsOptions& dyn, MatrixXd& w, VectorXd& tau) {
  const int n = model.n_joints();
  require_size(data.q.cols(), n, "log joint count");
  const auto ns = data.q.rows();
  const int cols = red ? red->b : ParamLayout(model).size();
  std::vector<int> pick;
  if (red) pick = red->base_columns();
  w.resize(ns * n, cols);
  tau.resize(ns * n);
  for (Eigen::Index i = 0; i < ns; ++i) {
    const JointState s{data.q.row(i).transpose(), data.qd.row(i).transpose(),
                       data.qdd.row(i).transpose()};
    const MatrixXd h = regressor_row_block(model, s, dyn);
    if (red) {
      for (int k = 0; k < cols; ++k) w.block(i * n, k, n, 1) = h.col(pick[k]);
    } else {
      w.middleRows(i * n, n) = h;
    }
    tau.segment(i * n, n) = data.tau.row(i).transpose();
  }
}

IdentifiedModel identify_ls(const KinematicModel& model, const BaseReduction& red,
                            const SampleLog& log, const IdentifyOptions& opts) {
  require_size(red.n_params(), ParamLayout(model).size(), "base reduction parameter count");
  const PreparedLog data = preprocess(log, opts);
  require(static_cast<long>(data.q.rows()) * model.n_joints() >= 3L * red.b,
          "log too short: the stacked regressor needs at least 3 b rows", ErrorKind::kData);
  MatrixXd w;
  VectorXd tau;
  stack_problem(model, &red, data, opts.dyn, w, tau);
  const WeightedLsResult ls = solve_weighted_ls(w, tau, model.n_joints());
  IdentifiedModel idm;
  idm.reduction = red;
  idm.delta_b = ls.x;
  idm.dyn = opts.dyn;
  idm.report.mode = "unconstrained";
  idm.report.weights = ls.weights;
  idm.report.residual_rms = ls.residual_rms;
  idm.report.cond = ls.cond;
  return idm;
}

namespace {

// Log-barrier over the physical-consistency constraints of the full vector.
class Barrier {
 public:
  explicit Barrier(const ParamLayout& lay) : lay_(lay) {
    for (int k = 0; k < kLinkParams; ++k) {
      LinkParams p;
      if (k < 6) p.L[k] = 1.0;
      else if (k < 9) p.M(k - 6) = 1.0;
      else p.m = 1.0;
      basis_[k] = p.pseudo_inertia();
    }
    for (int j = 0; j < lay.n_joints(); ++j) {
      for (JointParam p : {kIa, kFv, kFc}) scalars_.push_back(lay.joint_index(j, p));
    }
  }

  bool interior(const VectorXd& d) const {
    for (int i = 0; i < lay_.n_links(); ++i) {
      if (Eigen::LLT<Eigen::Matrix4d>(pseudo(d, i)).info() != Eigen::Success) return false;
    }
    for (int s : scalars_) {
      if (!(d(s) > 0.0)) return false;
    }
    return true;
  }

  double value(const VectorXd& d) const {
    double v = 0.0;
    for (int i = 0; i < lay_.n_links(); ++i) {
      const Eigen::LLT<Eigen::Matrix4d> llt(pseudo(d, i));
      v -= 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    }
    for (int s : scalars_) v -= std::log(d(s));
    return v;
  }

  void add_derivatives(const VectorXd& d, double mu, VectorXd& grad, MatrixXd& hess) const {
    for (int i = 0; i < lay_.n_links(); ++i) {
      const Eigen::Matrix4d pinv = pseudo(d, i).inverse();
      std::array<Eigen::Matrix4d, kLinkParams> pe;
      for (int k = 0; k < kLinkParams; ++k) pe[k] = pinv * basis_[k];
      const int o = lay_.link_index(i, kLxx);
      for (int k = 0; k < kLinkParams; ++k) {
        grad(o + k) -= mu * pe[k].trace();
        for (int l = 0; l <= k; ++l) {
          const double h = mu * (pe[k] * pe[l]).trace();
          hess(o + k, o + l) += h;
          if (l != k) hess(o + l, o + k) += h;
        }
      }
    }
    for (int s : scalars_) {
      grad(s) -= mu / d(s);
      hess(s, s) += mu / (d(s) * d(s));
    }
  }

  // Clip every constraint block to a small positive margin.
  VectorXd project(VectorXd d) const {
    for (int i = 0; i < lay_.n_links(); ++i) {
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(pseudo(d, i));
      Eigen::Vector4d ev = es.eigenvalues();
      const double floor = std::max(1e-3 * ev.maxCoeff(), 1e-9);
      ev = ev.cwiseMax(floor);
      const Eigen::Matrix4d p = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
      const Mat3 sigma = p.topLeftCorner<3, 3>();
      const Mat3 l = sigma.trace() * Mat3::Identity() - sigma;
      const int o = lay_.link_index(i, kLxx);
      d.segment<6>(o) << l(0, 0), l(0, 1), l(0, 2), l(1, 1), l(1, 2), l(2, 2);
      d.segment<3>(o + 6) = p.topRightCorner<3, 1>();
      d(o + 9) = p(3, 3);
    }
    for (int s : scalars_) d(s) = std::max(d(s), 1e-6);
    return d;
  }

 private:
  Eigen::Matrix4d pseudo(const VectorXd& d, int link) const {
    Eigen::Matrix4d p = Eigen::Matrix4d::Zero();
    const int o = lay_.link_index(link, kLxx);
    for (int k = 0; k < kLinkParams; ++k) p += d(o + k) * basis_[k];
    return p;
  }

  ParamLayout lay_;
  std::array<Eigen::Matrix4d, kLinkParams> basis_;
  std::vector<int> scalars_;
};

}  // namespace

IdentifiedModel identify_feasible(const KinematicModel& model, const BaseReduction& red,
                                  const SampleLog& log, const IdentifyOptions& opts,
                                  const FeasibleOptions& fopts) {
  require(fopts.max_iter >= 1, "max_iter must be positive");
  const IdentifiedModel ls = identify_ls(model, red, log, opts);
  const ParamLayout lay(model);
  const int n = model.n_joints();
  const PreparedLog data = preprocess(log, opts);
  MatrixXd a;
  VectorXd y;
  stack_problem(model, nullptr, data, opts.dyn, a, y);
  const Eigen::Index ns = a.rows() / n;
  for (Eigen::Index i = 0; i < ns; ++i) {
    for (int j = 0; j < n; ++j) {
      a.row(i * n + j) *= ls.report.weights(j);
      y(i * n + j) *= ls.report.weights(j);
    }
  }
  // Weighted cost Q(d) = |A d - y|^2 / rows, kept in Gram form.
  const double rows = static_cast<double>(a.rows());
  const MatrixXd g2 = 2.0 * (a.transpose() * a) / rows;
  const VectorXd atb = a.transpose() * y / rows;
  const double c = y.squaredNorm() / rows;
  auto cost = [&](const VectorXd& d) { return 0.5 * d.dot(g2 * d) - 2.0 * atb.dot(d) + c; };

  const Barrier barrier(lay);
  // Start from the base solution spread onto the base columns, then project.
  VectorXd d = VectorXd::Zero(lay.size());
  const auto cols = red.base_columns();
  for (int k = 0; k < red.b; ++k) d(cols[k]) = ls.delta_b(k);
  d = barrier.project(d);
  require(barrier.interior(d), "could not find an interior starting point", ErrorKind::kNumerical);

  // The barrier alone is unbounded below along directions the data cannot see (it
  // favours ever larger pseudo-inertias), so a proximal term with the same mu weight
  // keeps those directions near the start and vanishes with the barrier.
  const VectorXd d0 = d;
  VectorXd prox(lay.size());
  for (int k = 0; k < lay.size(); ++k) {
    const int block = k < kLinkParams * lay.n_links() ? k / kLinkParams : -1;
    double scale = std::abs(d0(k));
    if (block >= 0) {
      scale = std::max(scale, 1e-3 * d0.segment(kLinkParams * block, kLinkParams).cwiseAbs().maxCoeff());
    }
    scale = std::max(scale, 1e-9);
    prox(k) = 1.0 / (scale * scale);
  }
  auto prox_value = [&](const VectorXd& x) { return (x - d0).cwiseAbs2().dot(prox); };

  VectorXd best = d;
  double best_q = cost(d);
  std::vector<double> history{best_q};
  int iters = 0;
  for (double mu = fopts.mu0; mu >= fopts.mu_final * 0.999 && iters < fopts.max_iter; mu *= 0.1) {
    for (int inner = 0; inner < 60 && iters < fopts.max_iter; ++inner, ++iters) {
      VectorXd grad = g2 * d - 2.0 * atb;
      MatrixXd hess = g2;
      barrier.add_derivatives(d, mu, grad, hess);
      grad += 2.0 * mu * prox.cwiseProduct(d - d0);
      hess.diagonal() += 2.0 * mu * prox;
      // Jacobi scaling keeps the solve well posed across parameter magnitudes.
      const VectorXd s = hess.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
      MatrixXd hs = s.asDiagonal() * hess * s.asDiagonal();
      hs.diagonal().array() += 1e-12;
      const VectorXd step = s.asDiagonal() * hs.ldlt().solve(-(s.asDiagonal() * grad));
      const double dec = -grad.dot(step);
      if (!(dec > 1e-18)) break;
      auto phi = [&](const VectorXd& x) { return cost(x) + mu * (barrier.value(x) + prox_value(x)); };
      const double phi0 = phi(d);
      double t = 1.0;
      VectorXd trial = d + step;
      int bt = 0;
      while (bt < 80 && (!barrier.interior(trial) || phi(trial) > phi0 - 0.25 * t * dec)) {
        t *= 0.5;
        trial = d + t * step;
        ++bt;
      }
      if (bt == 80) break;
      d = trial;
      const double q = cost(d);
      if (q < best_q) {
        best_q = q;
        best = d;
      }
      history.push_back(best_q);
      if (0.5 * dec < 1e-16) break;
    }
  }
  require(barrier.interior(best), "feasible fit left the constraint set", ErrorKind::kNumerical);

  IdentifiedModel idm;
  idm.reduction = red;
  idm.delta = best;
  idm.delta_b = base_params(red, best);
  idm.dyn = opts.dyn;
  idm.report = ls.report;
  idm.report.mode = "feasible";
  idm.report.iterations = iters;
  idm.report.objective_history = std::move(history);
  const VectorXd r = (y - a * best);
  idm.report.residual_rms = VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < ns; ++i) {
    for (int j = 0; j < n; ++j) {
      const double e = r(i * n + j) / ls.report.weights(j);
      idm.report.residual_rms(j) += e * e;
    }
  }
  idm.report.residual_rms = (idm.report.residual_rms / static_cast<double>(ns)).cwiseSqrt();
  return idm;
}

VectorXd predict_torque(const IdentifiedModel& idm, const KinematicModel& model,
                        const JointState& state) {
  const MatrixXd h = regressor_row_block(model, state, idm.dyn);
  if (idm.delta.size() > 0) return h * idm.delta;
  return reduce_regressor(idm.reduction, h) * idm.delta_b;
}

MatrixXd predict_series(const IdentifiedModel& idm, const KinematicModel& model,
                        const MatrixXd& q, const MatrixXd& qd, const MatrixXd& qdd) {
  require(q.rows() == qd.rows() && q.rows() == qdd.rows(), "series lengths differ");
  MatrixXd out(q.rows(), model.n_joints());
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    const JointState s{q.row(i).transpose(), qd.row(i).transpose(), qdd.row(i).transpose()};
    out.row(i) = predict_torque(idm, model, s).transpose();
  }
  return out;
}

}  // namespace hforce
