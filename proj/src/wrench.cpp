#include "hforce/wrench.hpp"

#include <cmath>

namespace hforce {

WrenchEstimate solve_wrench(const Mat6X& jac, const VectorXd& tau_ext, const WrenchOptions& opts) {
  require_size(tau_ext.size(), jac.cols(), "external torque");
  require(opts.sigma_min >= 0.0, "sigma_min must be non-negative");
  const bool full = jac.cols() >= 6;
  const MatrixXd j = full ? MatrixXd(jac) : MatrixXd(jac.topRows<3>());
  // J^T w = tau solved through the SVD of J; directions below the guard are dropped.
  const Eigen::JacobiSVD<MatrixXd> svd(j, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd& s = svd.singularValues();
  WrenchEstimate out;
  out.sigma_min = s.size() < j.rows() ? 0.0 : s(s.size() - 1);
  out.flag = out.sigma_min < opts.sigma_min ? WrenchFlag::kSingular : WrenchFlag::kOk;
  VectorXd coef = svd.matrixV().transpose() * tau_ext;
  for (Eigen::Index k = 0; k < s.size(); ++k) coef(k) = s(k) >= opts.sigma_min && s(k) > 0.0 ? coef(k) / s(k) : 0.0;
  const VectorXd w = svd.matrixU() * coef;
  out.force = opts.report_rotation * w.head<3>();
  if (full && !opts.force_only) {
    out.torque = opts.report_rotation * w.tail<3>();
    out.has_torque = true;
  }
  out.frame = opts.frame;
  return out;
}

MatrixXd expected_torque(const KinematicModel& model, const IdentifiedModel& idm,
                         const TrocarModel* trocar, const PreparedLog& data) {
  const MatrixXd fs = predict_series(idm, model, data.q, data.qd, data.qdd);
  if (!trocar) return fs;
  return correct_series(*trocar, data.q, data.qd, fs);
}

std::vector<WrenchEstimate> estimate_series(const KinematicModel& model, const IdentifiedModel& idm,
                                            const TrocarModel* trocar, const SampleLog& log,
                                            const IdentifyOptions& prep, const WrenchOptions& opts) {
  validate_log(log);
  const PreparedLog p = preprocess(log, prep);
  const MatrixXd tau_hat = expected_torque(model, idm, trocar, p);
  const int warm = trocar ? trocar->window - 1 : 0;
  std::vector<WrenchEstimate> out;
  out.reserve(static_cast<std::size_t>(log.n_samples()));
  for (int i = 0; i < log.n_samples(); ++i) {
    const VectorXd tau_ext = (p.tau.row(i) - tau_hat.row(i)).transpose();
    WrenchEstimate e = solve_wrench(spatial_jacobian(model, p.q.row(i).transpose()), tau_ext, opts);
    e.t = log.t(i);
    if (i < warm) e.flag = WrenchFlag::kWarmup;
    out.push_back(std::move(e));
  }
  return out;
}

StreamingEstimator::StreamingEstimator(KinematicModel model, IdentifiedModel idm,
                                       const TrocarModel* trocar, WrenchOptions opts)
    : model_(std::move(model)), idm_(std::move(idm)), trocar_(trocar), opts_(std::move(opts)) {}

WrenchEstimate StreamingEstimator::push(double t, const JointState& state, const VectorXd& tau) {
  const int n = model_.n_joints();
  require_size(tau.size(), n, "tau");
  history_.push_back(state);
  const int window = trocar_ ? trocar_->window : 1;
  while (static_cast<int>(history_.size()) > window) history_.pop_front();
  VectorXd tau_hat = predict_torque(idm_, model_, state);
  const bool warm = static_cast<int>(history_.size()) < window;
  if (trocar_ && !warm) {
    MatrixXd qh(window, n), vh(window, n);
    for (int r = 0; r < window; ++r) {
      qh.row(r) = history_[r].q.transpose();
      vh.row(r) = history_[r].qd.transpose();
    }
    tau_hat = correct(*trocar_, qh, vh, tau_hat);
  }
  WrenchEstimate e = solve_wrench(spatial_jacobian(model_, state.q), tau - tau_hat, opts_);
  e.t = t;
  if (warm) e.flag = WrenchFlag::kWarmup;
  return e;
}

double rmse(const VectorXd& est, const VectorXd& ref) {
  require(est.size() == ref.size(), "series lengths differ");
  require(ref.size() >= 1, "empty series");
  return std::sqrt((est - ref).squaredNorm() / static_cast<double>(ref.size()));
}

double nrmse(const VectorXd& est, const VectorXd& ref) {
  const double e = rmse(est, ref);
  const double range = ref.maxCoeff() - ref.minCoeff();
  require(range > 0.0, "reference signal is constant; NRMSE is undefined", ErrorKind::kData);
  return e / range;
}

MetricReport metric_report(const MatrixXd& est, const MatrixXd& ref,
                           const std::vector<std::string>& channels) {
  require(est.rows() == ref.rows() && est.cols() == ref.cols(), "estimate and reference differ in shape");
  require(static_cast<Eigen::Index>(channels.size()) == ref.cols(), "one channel name per column");
  MetricReport r;
  r.channels = channels;
  r.rmse.resize(ref.cols());
  r.nrmse.resize(ref.cols());
  r.range.resize(ref.cols());
  for (Eigen::Index c = 0; c < ref.cols(); ++c) {
    r.rmse(c) = rmse(est.col(c), ref.col(c));
    r.range(c) = ref.col(c).maxCoeff() - ref.col(c).minCoeff();
    r.nrmse(c) = nrmse(est.col(c), ref.col(c));
  }
  return r;
}

}  // namespace hforce
