#include "hforce/excite.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace hforce {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kMaxLogCond = 100.0;
constexpr double kPenaltyWeight = 1e3;

}  // namespace

FourierTrajectory FourierTrajectory::constant(const VectorXd& q, int n_harmonics, double f_f) {
  FourierTrajectory t;
  t.q_offset = q;
  t.a = MatrixXd::Zero(q.size(), n_harmonics);
  t.b = MatrixXd::Zero(q.size(), n_harmonics);
  t.f_f = f_f;
  return t;
}

JointState eval_trajectory(const FourierTrajectory& traj, double t) {
  require(traj.n_harmonics() >= 1, "trajectory needs at least one harmonic");
  require(traj.f_f > 0.0, "fundamental frequency must be positive");
  const int n = traj.n_joints();
  require(traj.a.rows() == n && traj.b.rows() == n && traj.b.cols() == traj.a.cols(),
          "trajectory coefficient shapes disagree");
  const double w = kTwoPi * traj.f_f;
  JointState s = JointState::zero(n);
  s.q = traj.q_offset;
  for (int k = 1; k <= traj.n_harmonics(); ++k) {
    const double kw = k * w;
    const double sn = std::sin(kw * t);
    const double cs = std::cos(kw * t);
    for (int j = 0; j < n; ++j) {
      const double a = traj.a(j, k - 1);
      const double b = traj.b(j, k - 1);
      s.q(j) += (a * sn - b * cs) / kw;
      s.qd(j) += a * cs + b * sn;
      s.qdd(j) += kw * (b * cs - a * sn);
    }
  }
  return s;
}

TrajectoryLimits TrajectoryLimits::from_model(const KinematicModel& model,
                                              const VectorXd& qd_abs_max) {
  require_size(qd_abs_max.size(), model.n_joints(), "qd_abs_max");
  TrajectoryLimits lim;
  lim.q_min = model.q_min();
  lim.q_max = model.q_max();
  lim.qd_min = -qd_abs_max;
  lim.qd_max = qd_abs_max;
  return lim;
}

int samples_per_period(double sample_rate, double f_f) {
  require(sample_rate > 0.0 && f_f > 0.0, "sample rate and frequency must be positive");
  // Guard against ceil() of a ratio that is integral up to round-off.
  const double r = sample_rate / f_f;
  const double nearest = std::round(r);
  return static_cast<int>(std::abs(r - nearest) < 1e-9 * r ? nearest : std::ceil(r));
}

MatrixXd sampled_base_regressor(const KinematicModel& model, const BaseReduction& red,
                                const FourierTrajectory& traj, double sample_rate) {
  require(sample_rate > 2.0 * traj.n_harmonics() * traj.f_f,
          "sample rate does not resolve the highest harmonic");
  const int ns = samples_per_period(sample_rate, traj.f_f);
  const int n = model.n_joints();
  const std::vector<int> cols = red.base_columns();
  MatrixXd w(static_cast<Eigen::Index>(ns) * n, red.b);
  const double dt = traj.period() / ns;
  for (int i = 0; i < ns; ++i) {
    const MatrixXd h = regressor_row_block(model, eval_trajectory(traj, i * dt));
    for (int k = 0; k < red.b; ++k) w.block(i * n, k, n, 1) = h.col(cols[k]);
  }
  return w;
}

double condition_number(const MatrixXd& w) {
  // Conditioning of the column space: fewer rows than columns is rank deficient.
  if (w.size() == 0 || w.rows() < w.cols()) return std::numeric_limits<double>::infinity();
  // The singular values of R from a QR match those of w and are cheaper to get.
  const MatrixXd r = w.householderQr().matrixQR().topRows(w.cols()).triangularView<Eigen::Upper>();
  const VectorXd sv = Eigen::JacobiSVD<MatrixXd>(r).singularValues();
  const double smax = sv(0);
  const double smin = sv(sv.size() - 1);
  const double floor = smax * std::numeric_limits<double>::epsilon() *
                       static_cast<double>(std::max(w.rows(), w.cols()));
  if (!(smin > floor)) return std::numeric_limits<double>::infinity();
  return smax / smin;
}

double constraint_margin(const KinematicModel& model, const FourierTrajectory& traj,
                         const TrajectoryLimits& lim, int grid_points) {
  const int n = model.n_joints();
  require(grid_points >= 1, "constraint grid needs at least one point");
  double margin = std::numeric_limits<double>::infinity();
  auto slack = [&](double v, double lo, double hi) {
    const double range = std::max(hi - lo, 1e-12);
    margin = std::min(margin, std::min(v - lo, hi - v) / range);
  };
  for (int i = 0; i < grid_points; ++i) {
    const JointState s = eval_trajectory(traj, i * traj.period() / grid_points);
    for (int j = 0; j < n; ++j) {
      slack(s.q(j), lim.q_min(j), lim.q_max(j));
      slack(s.qd(j), lim.qd_min(j), lim.qd_max(j));
    }
    if (lim.use_cart) {
      const Vec3 p = tip_position(model, s.q);
      for (int a = 0; a < 3; ++a) slack(p(a), lim.cart_min(a), lim.cart_max(a));
    }
  }
  // A degenerate range leaves an exactly-hit bound with zero slack, never "-0".
  return margin == 0.0 ? 0.0 : margin;
}

FourierTrajectory random_feasible_trajectory(const KinematicModel& model,
                                             const TrajectoryLimits& lim, int n_harmonics,
                                             double f_f, double span, std::mt19937_64& rng,
                                             int grid_points) {
  const int n = model.n_joints();
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::normal_distribution<double> g(0.0, 1.0);
  const VectorXd range = lim.q_max - lim.q_min;
  FourierTrajectory t = FourierTrajectory::constant(0.5 * (lim.q_min + lim.q_max), n_harmonics, f_f);
  for (int j = 0; j < n; ++j) {
    t.q_offset(j) += 0.1 * range(j) * u(rng);
    for (int k = 0; k < n_harmonics; ++k) {
      t.a(j, k) = g(rng);
      t.b(j, k) = g(rng);
    }
  }
  // Scale each joint so its peak-to-peak motion is span * range.
  const int probe = std::max(grid_points, 8 * n_harmonics);
  VectorXd lo = VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  VectorXd hi = -lo;
  for (int i = 0; i < probe; ++i) {
    const VectorXd q = eval_trajectory(t, i * t.period() / probe).q;
    lo = lo.cwiseMin(q);
    hi = hi.cwiseMax(q);
  }
  for (int j = 0; j < n; ++j) {
    const double ptp = hi(j) - lo(j);
    const double s = ptp > 0.0 ? span * range(j) / ptp : 0.0;
    t.a.row(j) *= s;
    t.b.row(j) *= s;
  }
  for (int tries = 0; tries < 60; ++tries) {
    if (constraint_margin(model, t, lim, grid_points) >= 0.0) return t;
    t.a *= 0.7;
    t.b *= 0.7;
  }
  t.a.setZero();
  t.b.setZero();
  return t;
}

namespace {

int n_vars(int n, int nh) { return n * (1 + 2 * nh); }

VectorXd pack(const FourierTrajectory& t) {
  const int n = t.n_joints();
  const int nh = t.n_harmonics();
  VectorXd x(n_vars(n, nh));
  x.head(n) = t.q_offset;
  x.segment(n, n * nh) = Eigen::Map<const VectorXd>(t.a.data(), n * nh);
  x.tail(n * nh) = Eigen::Map<const VectorXd>(t.b.data(), n * nh);
  return x;
}

FourierTrajectory unpack(const VectorXd& x, int n, int nh, double f_f) {
  FourierTrajectory t = FourierTrajectory::constant(x.head(n), nh, f_f);
  t.a = Eigen::Map<const MatrixXd>(x.data() + n, n, nh);
  t.b = Eigen::Map<const MatrixXd>(x.data() + n + n * nh, n, nh);
  return t;
}

struct Candidate {
  VectorXd x;
  double f = std::numeric_limits<double>::infinity();
  bool feasible = false;
};

}  // namespace

ExciteResult optimize_excitation(const KinematicModel& model, const BaseReduction& red,
                                 const TrajectoryLimits& lim, int n_harmonics, double f_f,
                                 std::uint64_t seed, int budget, const ExciteOptions& opts) {
  const int n = model.n_joints();
  require(n_harmonics >= 1 && f_f > 0.0, "need n_H >= 1 and f_f > 0");
  require(budget >= 1, "optimization budget must be at least one iteration");
  require(opts.n_starts >= 1, "need at least one start");
  for (const VectorXd* v : {&lim.q_min, &lim.q_max, &lim.qd_min, &lim.qd_max}) {
    require_size(v->size(), n, "trajectory limit vector");
  }
  require(((lim.q_max - lim.q_min).array() >= 0.0).all() &&
              ((lim.qd_max - lim.qd_min).array() >= 0.0).all(),
          "trajectory limits need min <= max", ErrorKind::kConfig);

  const int grid = opts.grid_per_harmonic * n_harmonics;
  const double opt_rate = opts.opt_sample_rate > 0.0 ? opts.opt_sample_rate : opts.sample_rate;
  const int d = n_vars(n, n_harmonics);
  const double w = kTwoPi * f_f;

  auto objective = [&](const VectorXd& x, bool& feasible) {
    const FourierTrajectory t = unpack(x, n, n_harmonics, f_f);
    const double m = constraint_margin(model, t, lim, grid);
    feasible = m >= 0.0;
    const double c = condition_number(sampled_base_regressor(model, red, t, opt_rate));
    const double logc = std::isfinite(c) ? std::min(std::log(c), kMaxLogCond) : kMaxLogCond;
    return logc + (feasible ? 0.0 : kPenaltyWeight * (-m));
  };

  // Per-coordinate initial simplex steps: 5 % of the range in position units.
  VectorXd step(d);
  const VectorXd range = lim.q_max - lim.q_min;
  for (int j = 0; j < n; ++j) {
    const double r = std::max(range(j), 1e-6);
    step(j) = 0.05 * r;
    for (int k = 0; k < n_harmonics; ++k) {
      step(n + k * n + j) = 0.05 * r * (k + 1) * w;
      step(n + n * n_harmonics + k * n + j) = 0.05 * r * (k + 1) * w;
    }
  }

  // Adaptive Nelder-Mead coefficients for dimension d.
  const double alpha = 1.0;
  const double beta = 1.0 + 2.0 / d;
  const double gamma = 0.75 - 0.5 / d;
  const double delta = 1.0 - 1.0 / d;

  std::vector<Candidate> finalists;
  int iterations = 0;
  const int per_start = std::max(1, budget / opts.n_starts);
  FourierTrajectory first_init;

  for (int s = 0; s < opts.n_starts; ++s) {
    std::mt19937_64 rng(seed * 1000003ULL + static_cast<std::uint64_t>(s));
    FourierTrajectory init =
        random_feasible_trajectory(model, lim, n_harmonics, f_f, opts.init_span, rng, grid);
    if (s == 0) {
      // The first start sits exactly at the range midpoints.
      init.q_offset = 0.5 * (lim.q_min + lim.q_max);
      if (constraint_margin(model, init, lim, grid) < 0.0) {
        init = FourierTrajectory::constant(init.q_offset, n_harmonics, f_f);
      }
      first_init = init;
    }
    Candidate best;
    auto consider = [&](const VectorXd& x, double f, bool feasible) {
      if (feasible && f < best.f) best = Candidate{x, f, true};
    };

    std::vector<VectorXd> simplex(d + 1, pack(init));
    std::vector<double> fval(d + 1);
    std::vector<char> feas(d + 1);
    for (int i = 0; i <= d; ++i) {
      if (i > 0) simplex[i](i - 1) += step(i - 1);
      bool ok = false;
      fval[i] = objective(simplex[i], ok);
      feas[i] = ok;
      consider(simplex[i], fval[i], ok);
    }
    std::vector<int> order(d + 1);
    for (int it = 0; it < per_start; ++it, ++iterations) {
      for (int i = 0; i <= d; ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(), [&](int l, int r) { return fval[l] < fval[r]; });
      const int worst = order[d];
      const int second = order[d - 1];
      const int bestv = order[0];
      VectorXd centroid = VectorXd::Zero(d);
      for (int i = 0; i < d; ++i) centroid += simplex[order[i]];
      centroid /= d;

      auto eval = [&](const VectorXd& x, bool& ok) {
        const double f = objective(x, ok);
        consider(x, f, ok);
        return f;
      };
      bool ok_r = false;
      const VectorXd xr = centroid + alpha * (centroid - simplex[worst]);
      const double fr = eval(xr, ok_r);
      if (fr < fval[bestv]) {
        bool ok_e = false;
        const VectorXd xe = centroid + beta * (xr - centroid);
        const double fe = eval(xe, ok_e);
        if (fe < fr) {
          simplex[worst] = xe, fval[worst] = fe, feas[worst] = ok_e;
        } else {
          simplex[worst] = xr, fval[worst] = fr, feas[worst] = ok_r;
        }
        continue;
      }
      if (fr < fval[second]) {
        simplex[worst] = xr, fval[worst] = fr, feas[worst] = ok_r;
        continue;
      }
      const bool outside = fr < fval[worst];
      const VectorXd xc = outside ? VectorXd(centroid + gamma * (xr - centroid))
                                  : VectorXd(centroid + gamma * (simplex[worst] - centroid));
      bool ok_c = false;
      const double fc = eval(xc, ok_c);
      if (fc < (outside ? fr : fval[worst])) {
        simplex[worst] = xc, fval[worst] = fc, feas[worst] = ok_c;
        continue;
      }
      for (int i = 1; i <= d; ++i) {
        const int v = order[i];
        simplex[v] = simplex[bestv] + delta * (simplex[v] - simplex[bestv]);
        bool ok = false;
        fval[v] = eval(simplex[v], ok);
        feas[v] = ok;
      }
    }
    if (best.feasible) finalists.push_back(best);
  }

  ExciteResult res;
  res.report.seed = seed;
  res.report.iterations = iterations;
  res.report.cond_before =
      condition_number(sampled_base_regressor(model, red, first_init, opts.sample_rate));
  const bool init_feasible = constraint_margin(model, first_init, lim, grid) >= 0.0;

  // Re-rank the per-start winners at the reporting rate; never return anything worse
  // than the feasible starting point.
  double best_cond = std::numeric_limits<double>::infinity();
  bool found = false;
  if (init_feasible) {
    res.traj = first_init;
    best_cond = res.report.cond_before;
    found = true;
  }
  for (const Candidate& c : finalists) {
    const FourierTrajectory t = unpack(c.x, n, n_harmonics, f_f);
    const double cond = condition_number(sampled_base_regressor(model, red, t, opts.sample_rate));
    if (!found || cond < best_cond) {
      res.traj = t;
      best_cond = cond;
      found = true;
    }
  }
  require(found, "no feasible excitation trajectory found within the budget", ErrorKind::kData);
  res.report.cond_after = best_cond;
  res.report.constraint_margin = constraint_margin(model, res.traj, lim, grid);
  return res;
}

}  // namespace hforce
