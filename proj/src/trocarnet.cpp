#include "hforce/trocarnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace hforce {

CorrectionNet::CorrectionNet(int d_in, int hidden, std::mt19937_64& rng) {
  require(d_in >= 1 && hidden >= 1, "network sizes must be positive");
  const double k1 = 1.0 / std::sqrt(static_cast<double>(d_in));
  const double k2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  std::uniform_real_distribution<double> u1(-k1, k1), u2(-k2, k2);
  w1.resize(hidden, d_in);
  for (int c = 0; c < d_in; ++c) {
    for (int r = 0; r < hidden; ++r) w1(r, c) = u1(rng);
  }
  b1 = VectorXd::NullaryExpr(hidden, [&] { return u1(rng); });
  w2 = VectorXd::NullaryExpr(hidden, [&] { return u2(rng); });
  b2 = 0.0;
  in_mean = VectorXd::Zero(d_in);
  in_std = VectorXd::Ones(d_in);
}

MatrixXd CorrectionNet::normalize(const MatrixXd& x) const {
  require_size(x.rows(), d_in(), "network input");
  return (x.colwise() - in_mean).array().colwise() / in_std.array();
}

VectorXd CorrectionNet::forward_batch(const MatrixXd& x) const {
  const MatrixXd a = ((w1 * normalize(x)).colwise() + b1).cwiseMax(0.0);
  return (a.transpose() * w2).array() + b2;
}

double CorrectionNet::forward(const VectorXd& x) const { return forward_batch(x)(0); }

double mse_loss(const CorrectionNet& net, const MatrixXd& x, const VectorXd& y, NetGradient* grad) {
  require_size(y.size(), x.cols(), "targets");
  require(x.cols() > 0, "empty batch", ErrorKind::kData);
  const MatrixXd xn = net.normalize(x);
  const MatrixXd z = (net.w1 * xn).colwise() + net.b1;
  const MatrixXd a = z.cwiseMax(0.0);
  const VectorXd err = (a.transpose() * net.w2).array() + net.b2 - y.array();
  const double n = static_cast<double>(y.size());
  const double loss = err.squaredNorm() / n;
  if (grad) {
    const VectorXd dout = 2.0 / n * err;
    grad->w2 = a * dout;
    grad->b2 = dout.sum();
    const MatrixXd dz = (net.w2 * dout.transpose()).cwiseProduct((z.array() > 0.0).cast<double>().matrix());
    grad->w1 = dz * xn.transpose();
    grad->b1 = dz.rowwise().sum();
  }
  return loss;
}

VectorXd trocar_input(const MatrixXd& q_hist, const MatrixXd& qd_hist, double tau_fs) {
  require(q_hist.rows() == qd_hist.rows() && q_hist.cols() == qd_hist.cols(),
          "position and velocity histories differ in shape");
  const Eigen::Index w = q_hist.rows(), n = q_hist.cols();
  VectorXd x(2 * w * n + 1);
  for (Eigen::Index r = 0; r < w; ++r) {
    x.segment(r * n, n) = q_hist.row(r).transpose();
    x.segment(w * n + r * n, n) = qd_hist.row(r).transpose();
  }
  x(2 * w * n) = tau_fs;
  return x;
}

TrocarDataset build_trocar_dataset(const std::vector<SampleLog>& logs, const IdentifiedModel& idm,
                                   const KinematicModel& model, int window,
                                   const IdentifyOptions& prep) {
  require(window >= 1, "window must be at least 1");
  require(!logs.empty(), "no logs given", ErrorKind::kData);
  const int n = model.n_joints();
  int total = 0;
  for (const SampleLog& log : logs) {
    require(log.n_joints() == n, "log joint count does not match the model", ErrorKind::kData);
    require(log.n_samples() >= window,
            "log has " + std::to_string(log.n_samples()) + " samples, fewer than the window of " +
                std::to_string(window),
            ErrorKind::kData);
    total += log.n_samples() - window + 1;
  }
  TrocarDataset out;
  out.window = window;
  out.n_joints = n;
  const int d_in = trocar_input_size(window, n);
  out.joints.assign(n, JointSamples{MatrixXd(d_in, total), VectorXd(total)});
  int col = 0;
  for (const SampleLog& log : logs) {
    const PreparedLog p = preprocess(log, prep);
    const MatrixXd tau_fs = predict_series(idm, model, p.q, p.qd, p.qdd);
    for (int i = window - 1; i < log.n_samples(); ++i, ++col) {
      const auto qh = p.q.middleRows(i - window + 1, window);
      const auto vh = p.qd.middleRows(i - window + 1, window);
      for (int j = 0; j < n; ++j) {
        out.joints[j].x.col(col) = trocar_input(qh, vh, tau_fs(i, j));
        out.joints[j].y(col) = log.tau(i, j) - tau_fs(i, j);
      }
    }
  }
  return out;
}

void TrainConfig::validate() const {
  const auto cfg = ErrorKind::kConfig;
  require(epochs >= 1, "epochs must be at least 1", cfg);
  require(lr > 0.0 && batch >= 1 && window >= 1 && hidden >= 1,
          "lr, batch, window and hidden must be positive", cfg);
  require(train_frac > 0.0 && val_frac >= 0.0 && test_frac >= 0.0 &&
              std::abs(train_frac + val_frac + test_frac - 1.0) < 1e-9,
          "split fractions must be non-negative and sum to 1", cfg);
  require(factor > 0.0 && factor < 1.0 && patience >= 0, "invalid plateau settings", cfg);
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && eps > 0.0,
          "invalid Adam settings", cfg);
}

SplitIndices split_indices(int n, const TrainConfig& cfg) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(cfg.seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const int n_train = static_cast<int>(std::lround(cfg.train_frac * n));
  const int n_val = std::min(n - n_train, static_cast<int>(std::lround(cfg.val_frac * n)));
  SplitIndices s;
  s.train.assign(idx.begin(), idx.begin() + n_train);
  s.val.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
  s.test.assign(idx.begin() + n_train + n_val, idx.end());
  return s;
}

void input_stats(const MatrixXd& x, const std::vector<int>& cols, VectorXd& mean, VectorXd& std) {
  require(!cols.empty(), "no samples for normalisation statistics", ErrorKind::kData);
  const double n = static_cast<double>(cols.size());
  mean = VectorXd::Zero(x.rows());
  for (int c : cols) mean += x.col(c);
  mean /= n;
  VectorXd var = VectorXd::Zero(x.rows());
  for (int c : cols) var += (x.col(c) - mean).cwiseAbs2();
  std = (var / n).cwiseSqrt();
  for (Eigen::Index k = 0; k < std.size(); ++k) {
    if (!(std(k) > 1e-12 * std::max(1.0, std::abs(mean(k))))) std(k) = 1.0;
  }
}

namespace {

MatrixXd gather_x(const MatrixXd& x, const std::vector<int>& idx, std::size_t begin, std::size_t end) {
  MatrixXd out(x.rows(), static_cast<Eigen::Index>(end - begin));
  for (std::size_t k = begin; k < end; ++k) out.col(static_cast<Eigen::Index>(k - begin)) = x.col(idx[k]);
  return out;
}

VectorXd gather_y(const VectorXd& y, const std::vector<int>& idx, std::size_t begin, std::size_t end) {
  VectorXd out(static_cast<Eigen::Index>(end - begin));
  for (std::size_t k = begin; k < end; ++k) out(static_cast<Eigen::Index>(k - begin)) = y(idx[k]);
  return out;
}

struct AdamState {
  NetGradient m, v;
  int t = 0;

  explicit AdamState(const CorrectionNet& net) {
    m.w1 = v.w1 = MatrixXd::Zero(net.hidden(), net.d_in());
    m.b1 = v.b1 = VectorXd::Zero(net.hidden());
    m.w2 = v.w2 = VectorXd::Zero(net.hidden());
  }

  void step(CorrectionNet& net, const NetGradient& g, const TrainConfig& cfg, double lr) {
    ++t;
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    auto update = [&](auto& p, auto& mm, auto& vv, const auto& gg) {
      mm = cfg.beta1 * mm + (1.0 - cfg.beta1) * gg;
      vv = cfg.beta2 * vv + (1.0 - cfg.beta2) * gg.cwiseAbs2();
      p.array() -= lr * (mm.array() / c1) / ((vv.array() / c2).sqrt() + cfg.eps);
    };
    update(net.w1, m.w1, v.w1, g.w1);
    update(net.b1, m.b1, v.b1, g.b1);
    update(net.w2, m.w2, v.w2, g.w2);
    m.b2 = cfg.beta1 * m.b2 + (1.0 - cfg.beta1) * g.b2;
    v.b2 = cfg.beta2 * v.b2 + (1.0 - cfg.beta2) * g.b2 * g.b2;
    net.b2 -= lr * (m.b2 / c1) / (std::sqrt(v.b2 / c2) + cfg.eps);
  }
};

}  // namespace

CorrectionNet train_net(const JointSamples& data, const TrainConfig& cfg, TrainHistory& history) {
  cfg.validate();
  const int n = static_cast<int>(data.y.size());
  require(data.x.cols() == n, "inputs and targets differ in length");
  SplitIndices split = split_indices(n, cfg);
  require(!split.train.empty(), "training split is empty", ErrorKind::kData);

  std::mt19937_64 rng(cfg.seed ^ 0x5851f42d4c957f2dULL);
  CorrectionNet net(static_cast<int>(data.x.rows()), cfg.hidden, rng);
  input_stats(data.x, split.train, net.in_mean, net.in_std);
  // Targets are standardised with training-split statistics while training; the scale
  // is folded into the output layer at the end.
  VectorXd y_mean, y_std;
  input_stats(data.y.transpose(), split.train, y_mean, y_std);
  // Tiny but non-zero spreads keep their own scale, so near-zero residuals stay near zero.
  double spread = 0.0;
  for (int c : split.train) spread += (data.y(c) - y_mean(0)) * (data.y(c) - y_mean(0));
  spread = std::sqrt(spread / static_cast<double>(split.train.size()));
  if (spread > 0.0) y_std(0) = spread;
  const VectorXd y = (data.y.array() - y_mean(0)) / y_std(0);

  const MatrixXd x_val = gather_x(data.x, split.val, 0, split.val.size());
  const VectorXd y_val = gather_y(y, split.val, 0, split.val.size());
  AdamState adam(net);
  double lr = cfg.lr;
  double best_val = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;
  history = TrainHistory{};
  std::vector<int> order = split.train;
  NetGradient g;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch));
      const double loss = mse_loss(net, gather_x(data.x, order, b, e), gather_y(y, order, b, e), &g);
      if (!std::isfinite(loss)) {
        throw Error(ErrorKind::kNumerical,
                    "training loss became non-finite at epoch " + std::to_string(epoch + 1));
      }
      sum += loss * static_cast<double>(e - b);
      adam.step(net, g, cfg, lr);
    }
    const double train_loss = sum / static_cast<double>(order.size());
    const double val_loss = split.val.empty() ? train_loss : mse_loss(net, x_val, y_val);
    history.train_loss.push_back(train_loss);
    history.val_loss.push_back(val_loss);
    history.lr.push_back(lr);
    if (val_loss < best_val * (1.0 - cfg.threshold)) {
      best_val = val_loss;
      bad_epochs = 0;
    } else if (++bad_epochs > cfg.patience) {
      lr *= cfg.factor;
      bad_epochs = 0;
    }
  }
  net.w2 *= y_std(0);
  net.b2 = net.b2 * y_std(0) + y_mean(0);
  // Reported losses are in target units.
  const double scale2 = y_std(0) * y_std(0);
  for (std::size_t e = 0; e < history.train_loss.size(); ++e) {
    history.train_loss[e] *= scale2;
    history.val_loss[e] *= scale2;
  }
  if (!split.test.empty()) {
    history.test_loss = mse_loss(net, gather_x(data.x, split.test, 0, split.test.size()),
                                 gather_y(data.y, split.test, 0, split.test.size()));
  }
  return net;
}

TrocarModel train_trocar(const TrocarDataset& data, const TrainConfig& cfg) {
  require(data.window == cfg.window, "dataset window differs from the training window", ErrorKind::kConfig);
  TrocarModel tm;
  tm.window = data.window;
  for (std::size_t j = 0; j < data.joints.size(); ++j) {
    TrainConfig c = cfg;
    c.seed = cfg.seed + j;
    TrainHistory h;
    tm.nets.push_back(train_net(data.joints[j], c, h));
    tm.history.push_back(std::move(h));
  }
  return tm;
}

VectorXd correct(const TrocarModel& tm, const MatrixXd& q_hist, const MatrixXd& qd_hist,
                 const VectorXd& tau_fs) {
  const Eigen::Index n = tau_fs.size();
  require(static_cast<Eigen::Index>(tm.nets.size()) == n, "one network per joint is required");
  require(q_hist.rows() >= tm.window && qd_hist.rows() >= tm.window,
          "need at least " + std::to_string(tm.window) + " states of history before correcting",
          ErrorKind::kData);
  const MatrixXd qh = q_hist.bottomRows(tm.window);
  const MatrixXd vh = qd_hist.bottomRows(tm.window);
  VectorXd out = tau_fs;
  for (Eigen::Index j = 0; j < n; ++j) out(j) += tm.nets[j].forward(trocar_input(qh, vh, tau_fs(j)));
  return out;
}

MatrixXd correct_series(const TrocarModel& tm, const MatrixXd& q, const MatrixXd& qd,
                        const MatrixXd& tau_fs) {
  require(q.rows() == qd.rows() && q.rows() == tau_fs.rows(), "series lengths differ");
  const Eigen::Index n = tau_fs.cols();
  require(static_cast<Eigen::Index>(tm.nets.size()) == n, "one network per joint is required");
  MatrixXd out = tau_fs;
  const Eigen::Index rows = q.rows() - tm.window + 1;
  if (rows <= 0) return out;
  for (Eigen::Index j = 0; j < n; ++j) {
    MatrixXd x(trocar_input_size(tm.window, static_cast<int>(n)), rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
      x.col(i) = trocar_input(q.middleRows(i, tm.window), qd.middleRows(i, tm.window),
                              tau_fs(i + tm.window - 1, j));
    }
    out.col(j).tail(rows) += tm.nets[j].forward_batch(x);
  }
  return out;
}

}  // namespace hforce
