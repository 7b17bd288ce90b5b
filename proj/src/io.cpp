#include "hforce/io.hpp"

#include "hforce/presets.hpp"

#include <openssl/evp.h>

#include <array>
#include <charconv>
#include <random>
#include <cmath>
#include <fstream>
#include <sstream>

namespace hforce::io {

namespace {

constexpr auto kCfg = ErrorKind::kConfig;
constexpr auto kData = ErrorKind::kData;

const Json& field(const Json& j, const char* key, const char* doc) {
  require(j.is_object(), std::string(doc) + ": expected an object", kCfg);
  const auto it = j.find(key);
  require(it != j.end(), std::string(doc) + ": missing field '" + key + "'", kCfg);
  return *it;
}

template <typename T>
T get(const Json& j, const char* key, const char* doc) {
  const Json& v = field(j, key, doc);
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(kCfg, std::string(doc) + ": field '" + key + "' has the wrong type");
  }
}

template <typename T>
T get_or(const Json& j, const char* key, T fallback, const char* doc) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return get<T>(j, key, doc);
}

VectorXd vec_or(const Json& j, const char* key, const VectorXd& fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return vector_from_json(j.at(key), key);
}

Json records(const std::vector<FileRecord>& files) {
  Json out = Json::array();
  for (const FileRecord& f : files) out.push_back({{"path", f.path}, {"sha256", f.sha256}});
  return out;
}

std::vector<FileRecord> records_from(const Json& j) {
  std::vector<FileRecord> out;
  for (const Json& r : j) out.push_back({get<std::string>(r, "path", "manifest"), get<std::string>(r, "sha256", "manifest")});
  return out;
}

const char* kind_name(JointKind k) {
  switch (k) {
    case JointKind::kRevolute: return "revolute";
    case JointKind::kPrismatic: return "prismatic";
    case JointKind::kFixed: break;
  }
  return "fixed";
}

JointKind kind_from(const std::string& s) {
  if (s == "revolute") return JointKind::kRevolute;
  if (s == "prismatic") return JointKind::kPrismatic;
  require(s == "fixed", "model: unknown joint_kind '" + s + "'", kCfg);
  return JointKind::kFixed;
}

std::vector<std::string> numbered(const std::string& prefix, int n, const std::string& suffix = "") {
  std::vector<std::string> out;
  for (int j = 1; j <= n; ++j) out.push_back(prefix + std::to_string(j) + suffix);
  return out;
}

}  // namespace

// --- plain files ---------------------------------------------------------------------

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open " + path.string(), kData);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write " + path.string(), kData);
  out << text;
  require(out.good(), "write failed for " + path.string(), kData);
}

Json read_json(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(kCfg, path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const Json& doc) { write_text(path, doc.dump(2) + "\n"); }

std::string sha256_hex(const std::string& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  require(EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) == 1,
          "SHA-256 failed", ErrorKind::kNumerical);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_text(path)); }

std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), r.ptr);
}

// --- Eigen helpers ---------------------------------------------------------------------

Json to_json(const VectorXd& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

Json to_json(const MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(to_json(VectorXd(m.row(r).transpose())));
  return rows;
}

VectorXd vector_from_json(const Json& j, const char* what) {
  require(j.is_array(), std::string(what) + ": expected an array of numbers", kCfg);
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    require(j[i].is_number(), std::string(what) + ": expected an array of numbers", kCfg);
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

MatrixXd matrix_from_json(const Json& j, const char* what) {
  require(j.is_array(), std::string(what) + ": expected a list of rows", kCfg);
  if (j.empty()) return MatrixXd();
  const std::size_t cols = j[0].size();
  MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    const VectorXd row = vector_from_json(j[r], what);
    require(static_cast<std::size_t>(row.size()) == cols, std::string(what) + ": ragged rows", kCfg);
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

// --- model ----------------------------------------------------------------------------

Json to_json(const KinematicModel& model) {
  Json frames = Json::array();
  for (const DHFrame& f : model.frames()) {
    Json r = {{"name", f.name},       {"parent", f.parent}, {"a_prev", f.a_prev}, {"alpha_prev", f.alpha_prev},
              {"d", f.d},             {"theta", f.theta},   {"joint_kind", kind_name(f.kind)}};
    if (f.kind != JointKind::kFixed) {
      if (f.terms.size() == 1) {
        r["joint_index"] = f.terms[0].index;
        r["sign"] = f.terms[0].coeff;
      } else {
        Json terms = Json::array();
        for (const CoordTerm& t : f.terms) terms.push_back({{"index", t.index}, {"coeff", t.coeff}});
        r["terms"] = terms;
      }
      r["offset"] = f.offset;
    }
    r["inertial"] = f.inertial;
    frames.push_back(r);
  }
  return {{"name", model.name()},
          {"n_joints", model.n_joints()},
          {"frames", frames},
          {"coupling", {{"m_to_d", to_json(model.coupling().m_to_d)}, {"d_to_q", to_json(model.coupling().d_to_q)}}},
          {"gravity", to_json(VectorXd(model.gravity()))},
          {"tip_frame", model.tip_frame()},
          {"q_min", to_json(model.q_min())},
          {"q_max", to_json(model.q_max())}};
}

KinematicModel model_from_json(const Json& j) {
  const char* doc = "model";
  const int n = get<int>(j, "n_joints", doc);
  require(n >= 1, "model: n_joints must be positive", kCfg);
  std::vector<DHFrame> frames;
  for (const Json& r : field(j, "frames", doc)) {
    DHFrame f;
    f.name = get<std::string>(r, "name", doc);
    f.parent = get<int>(r, "parent", doc);
    f.a_prev = get_or(r, "a_prev", 0.0, doc);
    f.alpha_prev = get_or(r, "alpha_prev", 0.0, doc);
    f.d = get_or(r, "d", 0.0, doc);
    f.theta = get_or(r, "theta", 0.0, doc);
    f.kind = kind_from(get_or<std::string>(r, "joint_kind", "fixed", doc));
    f.offset = get_or(r, "offset", 0.0, doc);
    f.inertial = get_or(r, "inertial", f.kind != JointKind::kFixed, doc);
    if (r.contains("terms")) {
      for (const Json& t : r.at("terms")) f.terms.push_back({get<int>(t, "index", doc), get<double>(t, "coeff", doc)});
    } else if (r.contains("joint_index")) {
      f.terms.push_back({get<int>(r, "joint_index", doc), get_or(r, "sign", 1.0, doc)});
    }
    frames.push_back(std::move(f));
  }
  CouplingMap c = CouplingMap::identity(n);
  if (j.contains("coupling")) {
    const Json& cj = j.at("coupling");
    if (cj.contains("m_to_d")) c.m_to_d = matrix_from_json(cj.at("m_to_d"), "coupling.m_to_d");
    if (cj.contains("d_to_q")) c.d_to_q = matrix_from_json(cj.at("d_to_q"), "coupling.d_to_q");
  }
  const VectorXd g = vec_or(j, "gravity", Vec3(0.0, 0.0, -9.81));
  require(g.size() == 3, "model: gravity needs three entries", kCfg);
  const int tip = get_or(j, "tip_frame", static_cast<int>(frames.size()) - 1, doc);
  KinematicModel model(get_or<std::string>(j, "name", "model", doc), std::move(frames), n, c, tip, Vec3(g));
  if (j.contains("q_min") || j.contains("q_max")) {
    model.set_limits(vec_or(j, "q_min", model.q_min()), vec_or(j, "q_max", model.q_max()));
  }
  return model;
}

KinematicModel load_model(const Json& ref, const fs::path& base_dir) {
  if (ref.is_object()) return model_from_json(ref);
  require(ref.is_string(), "model: expected a preset name, a file name or an inline model", kCfg);
  const std::string s = ref.get<std::string>();
  if (s == "rcm6") return rcm6_preset();
  if (s == "psm") return psm_preset();
  if (s == "planar2") return planar_chain({0.5, 0.4});
  return model_from_json(read_json(base_dir / s));
}

// --- parameters -------------------------------------------------------------------------

Json to_json(const DynamicParams& delta) {
  Json values = Json::object();
  const auto& names = delta.layout().names();
  for (int i = 0; i < delta.size(); ++i) values[names[i]] = delta.values()(i);
  Json layout = Json::array();
  for (int i = 0; i < delta.size(); ++i) layout.push_back({{"index", i}, {"name", names[i]}});
  return {{"n_links", delta.layout().n_links()}, {"n_joints", delta.layout().n_joints()}, {"values", values},
          {"layout", layout}};
}

DynamicParams params_from_json(const Json& j, const KinematicModel& model) {
  DynamicParams delta{ParamLayout(model)};
  const Json& values = field(j, "values", "parameters");
  require(values.is_object(), "parameters: 'values' must map names to numbers", kCfg);
  for (auto it = values.begin(); it != values.end(); ++it) {
    const int idx = delta.layout().index_of(it.key());
    require(idx >= 0, "parameters: unknown name '" + it.key() + "' for this model", kCfg);
    require(it.value().is_number(), "parameters: '" + it.key() + "' is not a number", kCfg);
    delta.values()(idx) = it.value().get<double>();
  }
  return delta;
}

// --- base reduction, trajectory, identified model ------------------------------------------

Json to_json(const BaseReduction& red) {
  return {{"perm", red.perm}, {"b", red.b},       {"recombine", to_json(red.recombine)},
          {"tol", red.tol},   {"seed", red.seed}, {"n_probe", red.n_probe}};
}

BaseReduction reduction_from_json(const Json& j) {
  const char* doc = "base reduction";
  BaseReduction r;
  r.perm = get<std::vector<int>>(j, "perm", doc);
  r.b = get<int>(j, "b", doc);
  r.recombine = matrix_from_json(field(j, "recombine", doc), "recombine");
  r.tol = get_or(j, "tol", 1e-8, doc);
  r.seed = get_or<std::uint64_t>(j, "seed", 0, doc);
  r.n_probe = get_or(j, "n_probe", 0, doc);
  require(r.b >= 0 && r.b <= r.n_params(), "base reduction: b out of range", kCfg);
  require(r.recombine.rows() == r.b && r.recombine.cols() == r.n_params(),
          "base reduction: recombine must be b x n_params", kCfg);
  return r;
}

Json to_json(const FourierTrajectory& traj) {
  return {{"q_offset", to_json(traj.q_offset)}, {"a", to_json(traj.a)}, {"b", to_json(traj.b)},
          {"f_f", traj.f_f}, {"n_H", traj.n_harmonics()}};
}

FourierTrajectory trajectory_from_json(const Json& j) {
  const char* doc = "trajectory";
  FourierTrajectory t;
  t.q_offset = vector_from_json(field(j, "q_offset", doc), "q_offset");
  t.a = matrix_from_json(field(j, "a", doc), "a");
  t.b = matrix_from_json(field(j, "b", doc), "b");
  t.f_f = get<double>(j, "f_f", doc);
  const int nh = get_or(j, "n_H", static_cast<int>(t.a.cols()), doc);
  require(t.f_f > 0.0, "trajectory: f_f must be positive", kCfg);
  require(t.a.rows() == t.q_offset.size() && t.b.rows() == t.q_offset.size() && t.a.cols() == nh &&
              t.b.cols() == nh,
          "trajectory: a and b must be n_joints x n_H", kCfg);
  return t;
}

Json to_json(const IdentifiedModel& idm) {
  const FitReport& r = idm.report;
  return {{"reduction", to_json(idm.reduction)},
          {"delta_b", to_json(idm.delta_b)},
          {"delta", to_json(idm.delta)},
          {"coulomb_width", idm.dyn.coulomb_width},
          {"fit_report",
           {{"mode", r.mode},
            {"weights", to_json(r.weights)},
            {"residual_rms", to_json(r.residual_rms)},
            {"cond", r.cond},
            {"iterations", r.iterations},
            {"objective_history", r.objective_history}}}};
}

IdentifiedModel identified_from_json(const Json& j) {
  const char* doc = "identified model";
  IdentifiedModel idm;
  idm.reduction = reduction_from_json(field(j, "reduction", doc));
  idm.delta_b = vector_from_json(field(j, "delta_b", doc), "delta_b");
  idm.delta = vec_or(j, "delta", VectorXd());
  idm.dyn.coulomb_width = get_or(j, "coulomb_width", idm.dyn.coulomb_width, doc);
  require(idm.delta_b.size() == idm.reduction.b, "identified model: delta_b length differs from b", kCfg);
  require(idm.delta.size() == 0 || idm.delta.size() == idm.reduction.n_params(),
          "identified model: delta length differs from the parameter count", kCfg);
  if (j.contains("fit_report")) {
    const Json& r = j.at("fit_report");
    idm.report.mode = get_or<std::string>(r, "mode", "", doc);
    idm.report.weights = vec_or(r, "weights", VectorXd());
    idm.report.residual_rms = vec_or(r, "residual_rms", VectorXd());
    idm.report.cond = get_or(r, "cond", 0.0, doc);
    idm.report.iterations = get_or(r, "iterations", 0, doc);
    idm.report.objective_history = get_or(r, "objective_history", std::vector<double>{}, doc);
  }
  return idm;
}

// --- nets -----------------------------------------------------------------------------------

Json to_json(const CorrectionNet& net) {
  return {{"d_in", net.d_in()},         {"hidden", net.hidden()},      {"w1", to_json(net.w1)},
          {"b1", to_json(net.b1)},      {"w2", to_json(net.w2)},       {"b2", net.b2},
          {"in_mean", to_json(net.in_mean)}, {"in_std", to_json(net.in_std)}};
}

CorrectionNet net_from_json(const Json& j) {
  const char* doc = "net";
  CorrectionNet net;
  net.w1 = matrix_from_json(field(j, "w1", doc), "w1");
  net.b1 = vector_from_json(field(j, "b1", doc), "b1");
  net.w2 = vector_from_json(field(j, "w2", doc), "w2");
  net.b2 = get<double>(j, "b2", doc);
  net.in_mean = vector_from_json(field(j, "in_mean", doc), "in_mean");
  net.in_std = vector_from_json(field(j, "in_std", doc), "in_std");
  const int h = static_cast<int>(net.w1.rows()), d = static_cast<int>(net.w1.cols());
  require(h >= 1 && d >= 1 && net.b1.size() == h && net.w2.size() == h && net.in_mean.size() == d &&
              net.in_std.size() == d,
          "net: inconsistent shapes", kCfg);
  require(get_or(j, "d_in", d, doc) == d && get_or(j, "hidden", h, doc) == h, "net: declared shapes differ", kCfg);
  return net;
}

Json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},         {"lr", c.lr},
          {"batch", c.batch},           {"window", c.window},
          {"hidden", c.hidden},         {"beta1", c.beta1},
          {"beta2", c.beta2},           {"eps", c.eps},
          {"patience", c.patience},     {"factor", c.factor},
          {"threshold", c.threshold},   {"train_frac", c.train_frac},
          {"val_frac", c.val_frac},     {"test_frac", c.test_frac},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const Json& j, TrainConfig c) {
  const char* doc = "training config";
  c.epochs = get_or(j, "epochs", c.epochs, doc);
  c.lr = get_or(j, "lr", c.lr, doc);
  c.batch = get_or(j, "batch", c.batch, doc);
  c.window = get_or(j, "window", c.window, doc);
  c.hidden = get_or(j, "hidden", c.hidden, doc);
  c.beta1 = get_or(j, "beta1", c.beta1, doc);
  c.beta2 = get_or(j, "beta2", c.beta2, doc);
  c.eps = get_or(j, "eps", c.eps, doc);
  c.patience = get_or(j, "patience", c.patience, doc);
  c.factor = get_or(j, "factor", c.factor, doc);
  c.threshold = get_or(j, "threshold", c.threshold, doc);
  c.train_frac = get_or(j, "train_frac", c.train_frac, doc);
  c.val_frac = get_or(j, "val_frac", c.val_frac, doc);
  c.test_frac = get_or(j, "test_frac", c.test_frac, doc);
  c.seed = get_or(j, "seed", c.seed, doc);
  c.validate();
  return c;
}

Json to_json(const TrocarModel& tm, const TrainConfig& cfg) {
  Json nets = Json::array();
  for (const CorrectionNet& n : tm.nets) nets.push_back(to_json(n));
  Json hist = Json::array();
  for (const TrainHistory& h : tm.history) {
    Json e = {{"epochs", h.train_loss.size()}, {"test_loss", h.test_loss}};
    if (!h.train_loss.empty()) {
      e["final_train_loss"] = h.train_loss.back();
      e["final_val_loss"] = h.val_loss.back();
      e["final_lr"] = h.lr.back();
      e["train_loss"] = h.train_loss;
      e["val_loss"] = h.val_loss;
    }
    hist.push_back(e);
  }
  return {{"window", tm.window}, {"config", to_json(cfg)}, {"nets", nets}, {"history", hist}};
}

TrocarModel trocar_from_json(const Json& j) {
  const char* doc = "trocar nets";
  TrocarModel tm;
  tm.window = get<int>(j, "window", doc);
  require(tm.window >= 1, "trocar nets: window must be positive", kCfg);
  for (const Json& n : field(j, "nets", doc)) tm.nets.push_back(net_from_json(n));
  const int d = trocar_input_size(tm.window, static_cast<int>(tm.nets.size()));
  for (const CorrectionNet& n : tm.nets) require(n.d_in() == d, "trocar nets: input size differs from 2*window*n+1", kCfg);
  return tm;
}

// --- metrics and contact ------------------------------------------------------------------

Json to_json(const MetricReport& r) {
  Json ch = Json::array();
  for (std::size_t c = 0; c < r.channels.size(); ++c) {
    const auto k = static_cast<Eigen::Index>(c);
    ch.push_back({{"name", r.channels[c]}, {"rmse", r.rmse(k)}, {"nrmse", r.nrmse(k)}, {"range", r.range(k)}});
  }
  return {{"channels", ch}};
}

MetricReport metrics_from_json(const Json& j) {
  MetricReport r;
  const Json& ch = field(j, "channels", "metrics");
  const auto n = static_cast<Eigen::Index>(ch.size());
  r.rmse.resize(n);
  r.nrmse.resize(n);
  r.range.resize(n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const Json& e = ch[static_cast<std::size_t>(c)];
    r.channels.push_back(get<std::string>(e, "name", "metrics"));
    r.rmse(c) = get<double>(e, "rmse", "metrics");
    r.nrmse(c) = get<double>(e, "nrmse", "metrics");
    r.range(c) = get<double>(e, "range", "metrics");
  }
  return r;
}

Json to_json(const ContactScript& s) {
  Json f = Json::array();
  for (const Vec3& v : s.force) f.push_back(to_json(VectorXd(v)));
  return {{"t", s.t}, {"force", f}};
}

ContactScript contact_from_json(const Json& j) {
  ContactScript s;
  s.t = get<std::vector<double>>(j, "t", "contact");
  for (const Json& f : field(j, "force", "contact")) {
    const VectorXd v = vector_from_json(f, "contact force");
    require(v.size() == 3, "contact: every force needs three components", kCfg);
    s.force.emplace_back(v);
  }
  try {
    s.validate();
  } catch (const Error& e) {
    throw Error(kCfg, std::string("contact: ") + e.what());
  }
  return s;
}

// --- repro config ----------------------------------------------------------------------------

Json to_json(const MotionConfig& m) {
  return {{"lo", to_json(m.lo)},   {"hi", to_json(m.hi)},
          {"n_logs", m.n_logs},    {"duration", m.duration},
          {"n_harmonics", m.n_harmonics}, {"f_f", m.f_f},
          {"span", m.span}};
}

MotionConfig motion_from_json(const Json& j, MotionConfig m) {
  const char* doc = "motion";
  m.lo = vec_or(j, "lo", m.lo);
  m.hi = vec_or(j, "hi", m.hi);
  m.n_logs = get_or(j, "n_logs", m.n_logs, doc);
  m.duration = get_or(j, "duration", m.duration, doc);
  m.n_harmonics = get_or(j, "n_harmonics", m.n_harmonics, doc);
  m.f_f = get_or(j, "f_f", m.f_f, doc);
  m.span = get_or(j, "span", m.span, doc);
  return m;
}

namespace {

Json noise_json(const NoiseConfig& n) {
  Json j = {{"tau_std", n.tau_std}, {"tau_rel", n.tau_rel}, {"qd_std", n.qd_std}};
  if (n.tau_std_joint.size() > 0) j["tau_std_joint"] = to_json(n.tau_std_joint);
  return j;
}

}  // namespace

NoiseConfig noise_from_json(const Json& j, NoiseConfig n) {
  const char* doc = "noise";
  n.tau_std = get_or(j, "tau_std", n.tau_std, doc);
  n.tau_std_joint = vec_or(j, "tau_std_joint", n.tau_std_joint);
  n.tau_rel = get_or(j, "tau_rel", n.tau_rel, doc);
  n.qd_std = get_or(j, "qd_std", n.qd_std, doc);
  require(n.tau_std >= 0.0 && n.tau_rel >= 0.0 && n.qd_std >= 0.0, "noise: levels must be non-negative", kCfg);
  return n;
}

Json to_json(const IdentifyOptions& p) {
  return {{"fc", p.fc}, {"filter_q", p.filter_q}, {"use_logged_qdd", p.use_logged_qdd},
          {"coulomb_width", p.dyn.coulomb_width}};
}

IdentifyOptions preprocess_from_json(const Json& j, IdentifyOptions p) {
  const char* doc = "preprocessing";
  p.fc = get_or(j, "fc", p.fc, doc);
  p.filter_q = get_or(j, "filter_q", p.filter_q, doc);
  p.use_logged_qdd = get_or(j, "use_logged_qdd", p.use_logged_qdd, doc);
  p.dyn.coulomb_width = get_or(j, "coulomb_width", p.dyn.coulomb_width, doc);
  require(std::isfinite(p.fc), "preprocessing: fc must be finite", kCfg);
  return p;
}

Json to_json(const ReproConfig& c) {
  return {{"quick", false},
          {"rate", c.rate},
          {"noise", noise_json(c.noise)},
          {"qd_max", to_json(c.qd_max)},
          {"n_harmonics", c.n_harmonics},
          {"f_f", c.f_f},
          {"excite_budget", c.excite_budget},
          {"excite_opt_rate", c.excite_opt_rate},
          {"ident_periods", c.ident_periods},
          {"preprocess", to_json(c.prep)},
          {"feasible", c.feasible},
          {"heldout", to_json(c.heldout)},
          {"workspace_a", to_json(c.ws_a)},
          {"workspace_b", to_json(c.ws_b)},
          {"mismatch_channels", c.mismatch_channels},
          {"learner", to_json(c.learner)},
          {"q_ref", to_json(c.q_ref)},
          {"port_depth", c.port_depth},
          {"k_t", c.k_t},
          {"c_t", c.c_t},
          {"trocar_train", to_json(c.trocar_train)},
          {"trocar_test", to_json(c.trocar_test)},
          {"train", to_json(c.train)},
          {"force_peak", c.force_peak},
          {"force_knot_dt", c.force_knot_dt},
          {"run_noiseless", c.run_noiseless}};
}

ReproConfig repro_config_from_json(const Json& j) {
  const char* doc = "repro config";
  require(j.is_object(), "repro config: expected an object", kCfg);
  ReproConfig c = ReproConfig::defaults(get_or(j, "quick", false, doc));
  c.rate = get_or(j, "rate", c.rate, doc);
  if (j.contains("noise")) c.noise = noise_from_json(j.at("noise"), NoiseConfig{});
  c.qd_max = vec_or(j, "qd_max", c.qd_max);
  c.n_harmonics = get_or(j, "n_harmonics", c.n_harmonics, doc);
  c.f_f = get_or(j, "f_f", c.f_f, doc);
  c.excite_budget = get_or(j, "excite_budget", c.excite_budget, doc);
  c.excite_opt_rate = get_or(j, "excite_opt_rate", c.excite_opt_rate, doc);
  c.ident_periods = get_or(j, "ident_periods", c.ident_periods, doc);
  if (j.contains("preprocess")) c.prep = preprocess_from_json(j.at("preprocess"), c.prep);
  c.feasible = get_or(j, "feasible", c.feasible, doc);
  if (j.contains("heldout")) c.heldout = motion_from_json(j.at("heldout"), c.heldout);
  if (j.contains("workspace_a")) c.ws_a = motion_from_json(j.at("workspace_a"), c.ws_a);
  if (j.contains("workspace_b")) c.ws_b = motion_from_json(j.at("workspace_b"), c.ws_b);
  c.mismatch_channels = get_or(j, "mismatch_channels", c.mismatch_channels, doc);
  if (j.contains("learner")) c.learner = train_config_from_json(j.at("learner"), c.learner);
  c.q_ref = vec_or(j, "q_ref", c.q_ref);
  c.port_depth = get_or(j, "port_depth", c.port_depth, doc);
  c.k_t = get_or(j, "k_t", c.k_t, doc);
  c.c_t = get_or(j, "c_t", c.c_t, doc);
  if (j.contains("trocar_train")) c.trocar_train = motion_from_json(j.at("trocar_train"), c.trocar_train);
  if (j.contains("trocar_test")) c.trocar_test = motion_from_json(j.at("trocar_test"), c.trocar_test);
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"), c.train);
  c.force_peak = get_or(j, "force_peak", c.force_peak, doc);
  c.force_knot_dt = get_or(j, "force_knot_dt", c.force_knot_dt, doc);
  c.run_noiseless = get_or(j, "run_noiseless", c.run_noiseless, doc);
  c.validate();
  return c;
}

// --- scenario ----------------------------------------------------------------------------------

Scenario scenario_from_json(const Json& j, const fs::path& base_dir) {
  const char* doc = "scenario";
  require(j.is_object(), "scenario: expected an object", kCfg);
  const KinematicModel model = load_model(field(j, "model", doc), base_dir);
  const int n = model.n_joints();
  const Json& dref = field(j, "delta_true", doc);
  DynamicParams delta{ParamLayout(model)};
  if (dref.is_string() && dref.get<std::string>() == "rcm6") {
    require(model.name() == "rcm6", "scenario: the rcm6 parameters need the rcm6 model", kCfg);
    delta = rcm6_true_params(model);
  } else {
    delta = params_from_json(dref.is_string() ? read_json(base_dir / dref.get<std::string>()) : dref, model);
  }
  Scenario s{PlantConfig{model, delta, TrocarConfig{}, NoiseConfig{}, PdGains{}, 1e-3, DynamicsOptions{}},
             std::nullopt, MotionConfig{}, VectorXd::Ones(n), ContactScript{}, 0.0, 1.0, 200.0, 10.0};
  PlantConfig& p = s.plant;
  p.dt = get_or(j, "dt", p.dt, doc);
  p.dyn.coulomb_width = get_or(j, "coulomb_width", p.dyn.coulomb_width, doc);

  if (model.name() == "rcm6") rcm6_default_gains(p.gains.kp, p.gains.kd);
  if (j.contains("gains")) {
    const Json& g = j.at("gains");
    p.gains.kp = vec_or(g, "kp", p.gains.kp);
    p.gains.kd = vec_or(g, "kd", p.gains.kd);
    p.gains.gravity_ff = get_or(g, "gravity_ff", true, doc);
  }
  require(p.gains.kp.size() == n && p.gains.kd.size() == n, "scenario: gains need kp and kd per joint", kCfg);

  if (j.contains("trocar")) {
    const Json& t = j.at("trocar");
    p.trocar.enabled = get_or(t, "enabled", true, doc);
    p.trocar.shaft_frame = get<int>(t, "shaft_frame", doc);
    require(p.trocar.shaft_frame >= 0 && p.trocar.shaft_frame < model.n_frames(),
            "scenario: trocar shaft_frame out of range", kCfg);
    p.trocar.k_t = get_or(t, "k_t", p.trocar.k_t, doc);
    p.trocar.c_t = get_or(t, "c_t", p.trocar.c_t, doc);
    if (t.contains("port")) {
      const VectorXd port = vector_from_json(t.at("port"), "trocar.port");
      require(port.size() == 3, "scenario: trocar port needs three coordinates", kCfg);
      p.trocar.port = port;
    } else {
      // Port on the shaft axis at q_ref, `depth` along the shaft from the remote centre.
      const VectorXd q_ref = vector_from_json(field(t, "q_ref", doc), "trocar.q_ref");
      require(q_ref.size() == n, "scenario: trocar q_ref needs one value per joint", kCfg);
      const VectorXd rcm = vec_or(t, "rcm", Vec3::Zero());
      require(rcm.size() == 3, "scenario: trocar rcm needs three coordinates", kCfg);
      const auto poses = forward_kinematics(model, q_ref);
      p.trocar.port = Vec3(rcm) + get_or(t, "depth", 0.04, doc) * poses[p.trocar.shaft_frame].linear().col(2);
    }
  }
  if (j.contains("noise")) {
    NoiseConfig base;
    base.tau_std = 0.005;
    p.noise = noise_from_json(j.at("noise"), base);
  }
  s.rate = get_or(j, "rate", s.rate, doc);
  s.duration = get_or(j, "duration", s.duration, doc);
  require(s.rate > 0.0 && s.duration > 0.0 && p.dt > 0.0, "scenario: rate, duration and dt must be positive", kCfg);
  s.qd_max = vec_or(j, "qd_max", s.qd_max);
  require(s.qd_max.size() == n, "scenario: qd_max needs one value per joint", kCfg);

  if (j.contains("trajectory")) {
    const Json& t = j.at("trajectory");
    s.trajectory = trajectory_from_json(t.is_string() ? read_json(base_dir / t.get<std::string>()) : t);
    require(s.trajectory->n_joints() == n, "scenario: trajectory joint count differs from the model", kCfg);
  } else {
    MotionConfig m;
    m.lo = model.q_min();
    m.hi = model.q_max();
    m.duration = s.duration;
    s.motion = motion_from_json(get_or(j, "motion", Json::object(), doc), m);
    s.motion.n_logs = 1;
    s.motion.duration = s.duration;
    s.motion.validate(n);
  }
  if (j.contains("contact")) {
    const Json& c = j.at("contact");
    if (c.contains("random")) {
      s.random_contact_peak = get<double>(c.at("random"), "peak", doc);
      s.random_contact_knot_dt = get_or(c.at("random"), "knot_dt", 1.0, doc);
      require(s.random_contact_peak > 0.0 && s.random_contact_knot_dt > 0.0,
              "scenario: random contact needs positive peak and knot_dt", kCfg);
    } else {
      s.contact = contact_from_json(c);
    }
  }
  try {
    p.validate();
  } catch (const Error& e) {
    throw Error(kCfg, std::string("scenario: ") + e.what());
  }
  return s;
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

ScenarioRun simulate_scenario(const Scenario& s, std::uint64_t seed, bool log_qdd) {
  const KinematicModel& model = s.plant.model;
  ScenarioRun run;
  if (s.trajectory) {
    run.reference = *s.trajectory;
  } else {
    TrajectoryLimits lim = TrajectoryLimits::from_model(model, s.qd_max);
    lim.q_min = s.motion.lo;
    lim.q_max = s.motion.hi;
    std::mt19937_64 rng(mix_seed(seed, 0));
    run.reference = random_feasible_trajectory(model, lim, s.motion.n_harmonics, s.motion.f_f, s.motion.span, rng,
                                               40 * s.motion.n_harmonics);
  }
  run.contact = s.contact;
  if (s.random_contact_peak > 0.0) {
    run.contact = random_contact_script(s.duration, s.random_contact_knot_dt, s.random_contact_peak, mix_seed(seed, 1));
  }
  GenerateOptions go;
  go.duration = s.duration;
  go.rate = s.rate;
  go.seed = mix_seed(seed, 2);
  go.log_qdd = log_qdd;
  go.contact = run.contact.t.empty() ? nullptr : &run.contact;
  const FourierTrajectory& ref = run.reference;
  run.data = generate_dataset(s.plant, [&ref](double t) { return eval_trajectory(ref, t); }, go);
  return run;
}

// --- CSV ------------------------------------------------------------------------------------

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

CsvTable read_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  CsvTable t;
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), path.string() + ": empty CSV file", kData);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  {
    std::istringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) t.header.push_back(cell);
  }
  const std::size_t cols = t.header.size();
  std::vector<double> values;
  int rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t count = 0;
    const char* p = line.data();
    const char* end = p + line.size();
    while (true) {
      double v = 0.0;
      const auto r = std::from_chars(p, end, v);
      require(r.ec == std::errc(), path.string() + ": bad number on data row " + std::to_string(rows + 1), kData);
      values.push_back(v);
      ++count;
      p = r.ptr;
      if (p == end) break;
      require(*p == ',', path.string() + ": bad separator on data row " + std::to_string(rows + 1), kData);
      ++p;
    }
    require(count == cols, path.string() + ": row " + std::to_string(rows + 1) + " has " + std::to_string(count) +
                               " fields, header has " + std::to_string(cols),
            kData);
    ++rows;
  }
  t.data = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), rows, static_cast<Eigen::Index>(cols));
  return t;
}

void write_csv(const fs::path& path, const CsvTable& table) {
  require(table.data.cols() == static_cast<Eigen::Index>(table.header.size()) || table.data.rows() == 0,
          "CSV header and data differ in width");
  std::string out;
  for (std::size_t i = 0; i < table.header.size(); ++i) out += (i ? "," : "") + table.header[i];
  out += '\n';
  for (Eigen::Index r = 0; r < table.data.rows(); ++r) {
    for (Eigen::Index c = 0; c < table.data.cols(); ++c) {
      if (c) out += ',';
      out += format_double(table.data(r, c));
    }
    out += '\n';
  }
  write_text(path, out);
}

CsvTable log_table(const SampleLog& log) {
  const int n = log.n_joints(), rows = log.n_samples();
  CsvTable t;
  t.header = {"t"};
  for (const char* p : {"q", "qd", "tau"}) {
    for (const std::string& s : numbered(p, n)) t.header.push_back(s);
  }
  if (log.has_qdd()) {
    for (const std::string& s : numbered("qdd", n)) t.header.push_back(s);
  }
  t.data.resize(rows, static_cast<Eigen::Index>(t.header.size()));
  t.data.col(0) = log.t;
  t.data.middleCols(1, n) = log.q;
  t.data.middleCols(1 + n, n) = log.qd;
  t.data.middleCols(1 + 2 * n, n) = log.tau;
  if (log.has_qdd()) t.data.middleCols(1 + 3 * n, n) = log.qdd;
  return t;
}

SampleLog log_from_table(const CsvTable& table) {
  const int cols = static_cast<int>(table.header.size());
  require((cols >= 4 && (cols - 1) % 3 == 0) || (cols >= 5 && (cols - 1) % 4 == 0),
          "sample log: header must be t,q1..qn,qd1..qdn,tau1..taun[,qdd1..qddn]", kData);
  // A header with 4n+1 columns carries accelerations only if the names say so.
  int n = (cols - 1) / 3;
  bool qdd = false;
  if ((cols - 1) % 4 == 0 && table.column("qdd1") >= 0) {
    n = (cols - 1) / 4;
    qdd = true;
  }
  std::vector<std::string> want = {"t"};
  for (const char* p : {"q", "qd", "tau"}) {
    for (const std::string& s : numbered(p, n)) want.push_back(s);
  }
  if (qdd) {
    for (const std::string& s : numbered("qdd", n)) want.push_back(s);
  }
  require(want == table.header, "sample log: header must be t,q1..qn,qd1..qdn,tau1..taun[,qdd1..qddn]", kData);
  SampleLog log;
  log.t = table.data.col(0);
  log.q = table.data.middleCols(1, n);
  log.qd = table.data.middleCols(1 + n, n);
  log.tau = table.data.middleCols(1 + 2 * n, n);
  if (qdd) log.qdd = table.data.middleCols(1 + 3 * n, n);
  try {
    validate_log(log);
  } catch (const Error& e) {
    throw Error(kData, std::string("sample log: ") + e.what());
  }
  return log;
}

CsvTable sidecar_table(const VectorXd& t, const MatrixXd& tau_clean, const MatrixXd& force) {
  require(tau_clean.rows() == t.size() && force.rows() == t.size() && force.cols() == 3,
          "sidecar columns must align with the time stamps");
  const int n = static_cast<int>(tau_clean.cols());
  CsvTable out;
  out.header = {"t"};
  for (const std::string& s : numbered("tau_clean_", n)) out.header.push_back(s);
  for (const char* s : {"Fx", "Fy", "Fz"}) out.header.push_back(s);
  out.data.resize(t.size(), n + 4);
  out.data << t, tau_clean, force;
  return out;
}

CsvTable estimates_table(const std::vector<WrenchEstimate>& est) {
  const bool torque = !est.empty() && est.front().has_torque;
  CsvTable out;
  out.header = {"t", "Fx", "Fy", "Fz"};
  if (torque) out.header.insert(out.header.end(), {"Tx", "Ty", "Tz"});
  out.header.push_back("flag");
  out.data.resize(static_cast<Eigen::Index>(est.size()), static_cast<Eigen::Index>(out.header.size()));
  for (std::size_t i = 0; i < est.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out.data(r, 0) = est[i].t;
    out.data.block<1, 3>(r, 1) = est[i].force.transpose();
    if (torque) out.data.block<1, 3>(r, 4) = est[i].torque.transpose();
    out.data(r, out.data.cols() - 1) = static_cast<double>(static_cast<int>(est[i].flag));
  }
  return out;
}

CsvTable trajectory_table(const FourierTrajectory& traj, double rate) {
  const int ns = samples_per_period(rate, traj.f_f);
  const int n = traj.n_joints();
  CsvTable out;
  out.header = {"t"};
  for (const std::string& s : numbered("q", n)) out.header.push_back(s);
  out.data.resize(ns, n + 1);
  for (int i = 0; i < ns; ++i) {
    const double t = i / rate;
    out.data(i, 0) = t;
    out.data.row(i).tail(n) = eval_trajectory(traj, t).q.transpose();
  }
  return out;
}

// --- manifests -------------------------------------------------------------------------------

std::string tool_version() { return "0.3.0"; }

namespace {

Json manifest_body(const RunManifest& m) {
  return {{"tool", "hforce"},
          {"version", tool_version()},
          {"subcommand", m.subcommand},
          {"seed", m.seed},
          {"configs", records(m.configs)},
          {"inputs", records(m.inputs)},
          {"outputs", records(m.outputs)},
          {"extra", m.extra}};
}

}  // namespace

std::string RunManifest::content_hash() const { return sha256_hex(manifest_body(*this).dump()); }

Json RunManifest::to_json() const {
  Json j = manifest_body(*this);
  Json stages = Json::object();
  for (const auto& [name, s] : stage_seconds) stages[name] = s;
  j["stage_seconds"] = stages;
  j["manifest_hash"] = content_hash();
  return j;
}

RunManifest manifest_from_json(const Json& j) {
  const char* doc = "manifest";
  RunManifest m;
  m.subcommand = get<std::string>(j, "subcommand", doc);
  m.seed = get_or<std::uint64_t>(j, "seed", 0, doc);
  m.configs = records_from(get_or(j, "configs", Json::array(), doc));
  m.inputs = records_from(get_or(j, "inputs", Json::array(), doc));
  m.outputs = records_from(get_or(j, "outputs", Json::array(), doc));
  m.extra = get_or(j, "extra", Json::object(), doc);
  if (j.contains("stage_seconds")) {
    for (auto it = j.at("stage_seconds").begin(); it != j.at("stage_seconds").end(); ++it) {
      m.stage_seconds.emplace_back(it.key(), it.value().get<double>());
    }
  }
  return m;
}

}  // namespace hforce::io
