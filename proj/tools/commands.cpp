#include "commands.hpp"

#include "hforce/presets.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <tuple>

namespace hforce::cli {

namespace {

using io::Json;
namespace fs = std::filesystem;

constexpr auto kCfg = ErrorKind::kConfig;
constexpr auto kData = ErrorKind::kData;

template <typename T>
T opt(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(kCfg, std::string("config: field '") + key + "' has the wrong type");
  }
}

const Json& need(const Json& j, const char* key) {
  require(j.contains(key), std::string("config: missing field '") + key + "'", kCfg);
  return j.at(key);
}

std::string fmt(double v, const char* spec = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

// One subcommand execution: config, output directory, recorded files and stage timings.
class Run {
 public:
  Run(const Invocation& inv, bool needs_config) : inv_(inv) {
    require(!inv.out.empty(), "--out is required", kCfg);
    out_ = inv.out;
    manifest_.subcommand = inv.subcommand;
    manifest_.seed = inv.seed;
    if (!inv.config.empty()) {
      const fs::path p = inv.config;
      require(fs::is_regular_file(p), "config file not found: " + inv.config, kCfg);
      try {
        config_ = io::read_json(p);
      } catch (const Error& e) {
        throw Error(kCfg, e.what());
      }
      require(config_.is_object(), "config: expected a JSON object", kCfg);
      base_ = p.parent_path();
      manifest_.configs.push_back({inv.config, io::sha256_file(p)});
    } else {
      require(!needs_config, "--config is required for " + inv.subcommand, kCfg);
      config_ = Json::object();
    }
    fs::create_directories(out_);
  }

  const Json& config() const { return config_; }
  const fs::path& base() const { return base_; }
  std::uint64_t seed() const { return inv_.seed; }

  // Resolves a config-relative input file and records its hash.
  fs::path input(const Json& ref) {
    require(ref.is_string(), "config: expected a file name", kCfg);
    const std::string name = ref.get<std::string>();
    const fs::path p = base_ / name;
    require(fs::is_regular_file(p), "input file not found: " + p.string(), kData);
    manifest_.inputs.push_back({name, io::sha256_file(p)});
    return p;
  }

  KinematicModel model() {
    const Json& ref = need(config_, "model");
    if (ref.is_string() && ref != "rcm6" && ref != "psm" && ref != "planar2") {
      return io::model_from_json(io::read_json(input(ref)));
    }
    return io::load_model(ref, base_);
  }

  IdentifiedModel identified() {
    return io::identified_from_json(io::read_json(input(need(config_, "identified"))));
  }

  SampleLog log(const Json& ref, int n_joints) {
    SampleLog l = io::log_from_table(io::read_csv(input(ref)));
    require(l.n_joints() == n_joints, "log joint count differs from the model", kData);
    return l;
  }

  IdentifyOptions prep(IdentifyOptions base = {}) const {
    return config_.contains("preprocess") ? io::preprocess_from_json(config_.at("preprocess"), base) : base;
  }

  void json(const std::string& rel, const Json& doc) {
    io::write_json(out_ / rel, doc);
    record(rel);
  }
  void csv(const std::string& rel, const io::CsvTable& t) {
    io::write_csv(out_ / rel, t);
    record(rel);
  }
  void text(const std::string& rel, const std::string& s) {
    io::write_text(out_ / rel, s);
    record(rel);
  }

  template <typename F>
  auto stage(const std::string& name, F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    auto result = f();
    manifest_.stage_seconds.emplace_back(
        name, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    return result;
  }

  io::RunManifest& manifest() { return manifest_; }

  // Writes manifest.json; returns the manifest hash.
  std::string finish() {
    std::sort(manifest_.outputs.begin(), manifest_.outputs.end(),
              [](const io::FileRecord& a, const io::FileRecord& b) { return a.path < b.path; });
    io::write_json(out_ / "manifest.json", manifest_.to_json());
    return manifest_.content_hash();
  }

 private:
  void record(const std::string& rel) { manifest_.outputs.push_back({rel, io::sha256_file(out_ / rel)}); }

  Invocation inv_;
  fs::path out_, base_;
  Json config_;
  io::RunManifest manifest_;
};

VectorXd vec(const Json& j, const char* key, int n) {
  const VectorXd v = io::vector_from_json(need(j, key), key);
  require(v.size() == n, std::string("config: ") + key + " needs one value per joint", kCfg);
  return v;
}

TrajectoryLimits limits_from(const Json& c, const KinematicModel& model) {
  const int n = model.n_joints();
  TrajectoryLimits lim = TrajectoryLimits::from_model(model, vec(c, "qd_max", n));
  if (c.contains("q_min")) lim.q_min = vec(c, "q_min", n);
  if (c.contains("q_max")) lim.q_max = vec(c, "q_max", n);
  if (c.contains("cart_min") || c.contains("cart_max")) {
    lim.use_cart = true;
    const VectorXd lo = io::vector_from_json(need(c, "cart_min"), "cart_min");
    const VectorXd hi = io::vector_from_json(need(c, "cart_max"), "cart_max");
    require(lo.size() == 3 && hi.size() == 3, "config: Cartesian box needs three coordinates", kCfg);
    lim.cart_min = lo;
    lim.cart_max = hi;
  }
  require(((lim.q_max - lim.q_min).array() > 0.0).all() && (lim.qd_max.array() > 0.0).all(),
          "config: limits must be non-empty", kCfg);
  return lim;
}

io::CsvTable torque_table(const VectorXd& t, const MatrixXd& tau, const char* prefix) {
  io::CsvTable out;
  out.header.push_back("t");
  for (int j = 0; j < tau.cols(); ++j) out.header.push_back(prefix + std::to_string(j + 1));
  out.data.resize(tau.rows(), tau.cols() + 1);
  out.data << t, tau;
  return out;
}

// CSV with a leading text column, which CsvTable cannot hold.
std::string text_csv(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  auto line = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
    out += '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out;
}

std::string aligned(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> w(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) w[i] = header[i].size();
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) w[i] = std::max(w[i], r[i].size());
  }
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      out += cells[i];
      if (i + 1 < cells.size()) out += std::string(w[i] - cells[i].size() + 2, ' ');
    }
    out += '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out;
}

std::string metrics_csv(const MetricReport& r) {
  std::vector<std::vector<std::string>> rows;
  for (std::size_t c = 0; c < r.channels.size(); ++c) {
    const auto i = static_cast<Eigen::Index>(c);
    rows.push_back({r.channels[c], io::format_double(r.rmse(i)), io::format_double(r.nrmse(i)),
                    io::format_double(r.range(i))});
  }
  return text_csv({"channel", "rmse", "nrmse", "range"}, rows);
}

}  // namespace

// --- excite ------------------------------------------------------------------------------

int run_excite(const Invocation& inv) {
  Run run(inv, true);
  const Json& c = run.config();
  const KinematicModel model = run.model();
  const TrajectoryLimits lim = limits_from(c, model);
  const int nh = opt(c, "n_harmonics", 6);
  const double f_f = opt(c, "f_f", 0.18);
  const int budget = opt(c, "budget", 1500);
  ExciteOptions eo;
  eo.n_starts = opt(c, "n_starts", eo.n_starts);
  eo.sample_rate = opt(c, "rate", eo.sample_rate);
  eo.opt_sample_rate = opt(c, "opt_rate", 20.0);
  eo.grid_per_harmonic = opt(c, "grid_per_harmonic", eo.grid_per_harmonic);
  require(nh >= 1 && f_f > 0.0 && budget >= 0 && eo.n_starts >= 1 && eo.sample_rate > 0.0,
          "config: n_harmonics, f_f, budget, n_starts and rate must be positive", kCfg);

  const BaseReduction red =
      run.stage("reduce", [&] { return compute_base_reduction(model, opt(c, "n_probe", 200), run.seed()); });
  const ExciteResult res =
      run.stage("optimize", [&] { return optimize_excitation(model, red, lim, nh, f_f, run.seed(), budget, eo); });

  run.json("trajectory.json", io::to_json(res.traj));
  run.csv("trajectory.csv", io::trajectory_table(res.traj, eo.sample_rate));
  const Json report = {{"cond_before", res.report.cond_before},
                       {"cond_after", res.report.cond_after},
                       {"iterations", res.report.iterations},
                       {"constraint_margin", res.report.constraint_margin},
                       {"n_base", red.b},
                       {"seed", res.report.seed}};
  run.json("excite_report.json", report);
  run.manifest().extra = report;
  run.finish();
  return 0;
}

// --- simulate ----------------------------------------------------------------------------

int run_simulate(const Invocation& inv) {
  Run run(inv, true);
  const Json& c = run.config();
  for (const char* key : {"model", "delta_true", "trajectory"}) {
    if (c.contains(key) && c.at(key).is_string()) {
      const std::string s = c.at(key).get<std::string>();
      if (s != "rcm6" && s != "psm" && s != "planar2") run.input(c.at(key));
    }
  }
  const io::Scenario sc = io::scenario_from_json(c, run.base());
  const KinematicModel& model = sc.plant.model;

  const io::ScenarioRun sim = run.stage("simulate", [&] { return io::simulate_scenario(sc, run.seed(), opt(c, "log_qdd", false)); });
  const GeneratedData& d = sim.data;
  const bool contact = !sim.contact.t.empty();

  run.csv("log.csv", io::log_table(d.log));
  run.csv("truth.csv", io::sidecar_table(d.log.t, d.tau_clean, d.force));
  run.json("reference.json", io::to_json(sim.reference));
  if (contact) run.json("contact.json", io::to_json(sim.contact));
  run.manifest().extra = {{"samples", d.log.n_samples()}, {"joints", model.n_joints()}, {"contact", contact}};
  run.finish();
  return 0;
}

// --- identify ----------------------------------------------------------------------------

int run_identify(const Invocation& inv) {
  Run run(inv, true);
  const Json& c = run.config();
  const KinematicModel model = run.model();
  const SampleLog log = run.log(need(c, "log"), model.n_joints());
  const IdentifyOptions prep = run.prep();
  const std::string mode = opt<std::string>(c, "mode", "ls");
  require(mode == "ls" || mode == "feasible", "config: mode must be 'ls' or 'feasible'", kCfg);
  FeasibleOptions fo;
  fo.max_iter = opt(c, "max_iter", fo.max_iter);

  const BaseReduction red =
      run.stage("reduce", [&] { return compute_base_reduction(model, opt(c, "n_probe", 200), run.seed()); });
  const IdentifiedModel idm = run.stage("fit", [&] {
    return mode == "ls" ? identify_ls(model, red, log, prep) : identify_feasible(model, red, log, prep, fo);
  });

  run.json("identified.json", io::to_json(idm));
  if (idm.delta.size() > 0) {
    DynamicParams d{ParamLayout(model)};
    d.values() = idm.delta;
    run.json("delta.json", io::to_json(d));
  }
  run.manifest().extra = {{"mode", mode},
                          {"n_base", red.b},
                          {"cond", idm.report.cond},
                          {"residual_rms", io::to_json(idm.report.residual_rms)}};
  run.finish();
  return 0;
}

// --- train-trocar ------------------------------------------------------------------------

int run_train_trocar(const Invocation& inv) {
  Run run(inv, true);
  const Json& c = run.config();
  const KinematicModel model = run.model();
  const IdentifiedModel idm = run.identified();
  const Json& refs = need(c, "logs");
  require(refs.is_array() && !refs.empty(), "config: logs must be a non-empty list of files", kCfg);
  std::vector<SampleLog> logs;
  for (const Json& r : refs) logs.push_back(run.log(r, model.n_joints()));
  const IdentifyOptions prep = run.prep();
  TrainConfig tc = io::train_config_from_json(opt(c, "train", Json::object()));
  tc.seed = run.seed();

  const TrocarDataset ds = run.stage("dataset", [&] { return build_trocar_dataset(logs, idm, model, tc.window, prep); });
  const TrocarModel tm = run.stage("train", [&] { return train_trocar(ds, tc); });

  run.json("nets.json", io::to_json(tm, tc));
  Json test = Json::array();
  for (const TrainHistory& h : tm.history) test.push_back(h.test_loss);
  run.manifest().extra = {{"samples", ds.n_samples()}, {"epochs", tc.epochs}, {"test_loss", test}};
  run.finish();
  return 0;
}

// --- estimate ----------------------------------------------------------------------------

int run_estimate(const Invocation& inv) {
  Run run(inv, true);
  const Json& c = run.config();
  const KinematicModel model = run.model();
  const IdentifiedModel idm = run.identified();
  std::optional<TrocarModel> nets;
  if (c.contains("nets")) nets = io::trocar_from_json(io::read_json(run.input(c.at("nets"))));
  const SampleLog log = run.log(need(c, "log"), model.n_joints());
  const IdentifyOptions prep = run.prep();
  WrenchOptions wo;
  wo.sigma_min = opt(c, "sigma_min", wo.sigma_min);
  wo.force_only = opt(c, "force_only", wo.force_only);
  wo.frame = opt(c, "frame", wo.frame);
  if (c.contains("report_rotation")) {
    const MatrixXd r = io::matrix_from_json(c.at("report_rotation"), "report_rotation");
    require(r.rows() == 3 && r.cols() == 3, "config: report_rotation must be 3 x 3", kCfg);
    require((r.transpose() * r - Mat3::Identity()).norm() < 1e-6, "config: report_rotation is not orthonormal", kCfg);
    wo.report_rotation = r;
  }
  require(wo.sigma_min > 0.0, "config: sigma_min must be positive", kCfg);
  const TrocarModel* tm = nets ? &*nets : nullptr;

  const auto est = run.stage("estimate", [&] { return estimate_series(model, idm, tm, log, prep, wo); });
  const MatrixXd tau_hat = expected_torque(model, idm, tm, preprocess(log, prep));

  run.csv("estimates.csv", io::estimates_table(est));
  run.csv("torque.csv", torque_table(log.t, tau_hat, "tau_hat_"));
  int flagged = 0;
  for (const WrenchEstimate& e : est) flagged += e.flag != WrenchFlag::kOk;
  run.manifest().extra = {{"samples", static_cast<int>(est.size())}, {"flagged", flagged}, {"hybrid", tm != nullptr}};
  run.finish();
  return 0;
}

// --- evaluate ----------------------------------------------------------------------------

int run_evaluate(const Invocation& inv) {
  Run run(inv, true);
  const Json& c = run.config();
  const io::CsvTable est = io::read_csv(run.input(need(c, "estimate")));
  const io::CsvTable ref = io::read_csv(run.input(need(c, "reference")));
  require(est.data.rows() == ref.data.rows(), "estimate and reference differ in row count", kData);
  require(est.data.rows() > 0, "estimate has no rows", kData);

  std::vector<std::pair<std::string, std::string>> pairs;
  if (c.contains("columns")) {
    for (const Json& p : c.at("columns")) {
      require(p.is_array() && p.size() == 2 && p[0].is_string() && p[1].is_string(),
              "config: columns entries are [estimate, reference] name pairs", kCfg);
      pairs.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());
    }
  } else {
    for (const std::string& h : est.header) {
      if (h != "t" && h != "flag" && ref.column(h) >= 0) pairs.emplace_back(h, h);
    }
  }
  require(!pairs.empty(), "no columns to compare", kData);

  std::vector<Eigen::Index> rows;
  const int flag = est.column("flag");
  const bool skip = opt(c, "skip_flagged", true);
  for (Eigen::Index r = 0; r < est.data.rows(); ++r) {
    if (!skip || flag < 0 || est.data(r, flag) == 0.0) rows.push_back(r);
  }
  require(!rows.empty(), "every estimate row is flagged", kData);

  MatrixXd e(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(pairs.size()));
  MatrixXd g(e.rows(), e.cols());
  std::vector<std::string> names;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const int ce = est.column(pairs[k].first);
    const int cr = ref.column(pairs[k].second);
    require(ce >= 0, "estimate has no column '" + pairs[k].first + "'", kData);
    require(cr >= 0, "reference has no column '" + pairs[k].second + "'", kData);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      e(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = est.data(rows[i], ce);
      g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = ref.data(rows[i], cr);
    }
    names.push_back(pairs[k].first);
  }
  MetricReport m;
  try {
    m = metric_report(e, g, names);
  } catch (const Error& err) {
    throw Error(kData, err.what());
  }
  run.json("metrics.json", io::to_json(m));
  run.text("metrics.csv", metrics_csv(m));
  run.manifest().extra = {{"rows", static_cast<int>(rows.size())}};
  run.finish();
  return 0;
}

// --- repro -------------------------------------------------------------------------------

int run_repro(const Invocation& inv) {
  Run run(inv, true);
  ReproConfig cfg = io::repro_config_from_json(run.config());
  cfg.seed = run.seed();
  const ReproResult r = hforce::run_repro(cfg);
  run.manifest().stage_seconds = r.stage_seconds;

  run.json("config_resolved.json", io::to_json(cfg));
  run.json("reduction.json", io::to_json(r.reduction));
  run.json("excitation/trajectory.json", io::to_json(r.excite.traj));
  run.csv("excitation/trajectory.csv", io::trajectory_table(r.excite.traj, cfg.rate));
  run.json("excitation/report.json", {{"cond_before", r.excite.report.cond_before},
                                      {"cond_after", r.excite.report.cond_after},
                                      {"iterations", r.excite.report.iterations},
                                      {"constraint_margin", r.excite.report.constraint_margin}});
  run.json("identification/identified_noiseless.json", io::to_json(r.ident.noiseless));
  run.json("identification/identified_noisy.json", io::to_json(r.ident.noisy));
  run.json("identification/recovery.json", {{"base_rel_err", r.ident.base_rel_err}});
  run.json("metrics/ident_heldout.json", io::to_json(r.ident.heldout));
  run.json("identification/heldout_noisy_reference.json", io::to_json(r.ident.heldout_noisy_ref));
  run.json("metrics/mismatch_model.json", io::to_json(r.mismatch.model));
  run.json("metrics/mismatch_learner.json", io::to_json(r.mismatch.learner));
  run.json("mismatch/overlap.json", {{"overlap", io::to_json(r.mismatch.overlap)}});

  std::vector<std::vector<std::string>> rows;
  auto compare = [&rows](const std::string& exp, const MetricReport& ref, const std::string& ref_name,
                         const MetricReport& m, const std::string& m_name) {
    for (std::size_t c = 0; c < m.channels.size(); ++c) {
      const auto i = static_cast<Eigen::Index>(c);
      rows.push_back({exp, m.channels[c], ref_name, fmt(ref.rmse(i)), fmt(ref.nrmse(i)), m_name, fmt(m.rmse(i)),
                      fmt(m.nrmse(i)), fmt(m.nrmse(i) - ref.nrmse(i))});
    }
  };
  compare("mismatch", r.mismatch.learner, "learner", r.mismatch.model, "model");
  for (const VariantResult& v : r.variants) {
    const std::string d = "variants/" + v.name + "/";
    run.json(d + "identified.json", io::to_json(v.idm));
    run.json(d + "nets.json", io::to_json(v.nets, cfg.train));
    run.json("metrics/trocar_" + v.name + "_model.json", io::to_json(v.trocar.model));
    run.json("metrics/trocar_" + v.name + "_hybrid.json", io::to_json(v.trocar.hybrid));
    run.json("metrics/force_" + v.name + "_model.json", io::to_json(v.force.model_metrics));
    run.json("metrics/force_" + v.name + "_hybrid.json", io::to_json(v.force.hybrid_metrics));
    run.csv(d + "contact_log.csv", io::log_table(v.force.log));
    run.csv(d + "contact_truth.csv",
            io::sidecar_table(v.force.log.t, MatrixXd::Zero(v.force.log.n_samples(), v.force.log.n_joints()),
                              v.force.applied));
    run.csv(d + "estimates_model.csv", io::estimates_table(v.force.model));
    run.csv(d + "estimates_hybrid.csv", io::estimates_table(v.force.hybrid));
    compare("trocar_" + v.name, v.trocar.model, "model", v.trocar.hybrid, "hybrid");
    compare("force_" + v.name, v.force.model_metrics, "model", v.force.hybrid_metrics, "hybrid");
  }
  const std::vector<std::string> header = {"experiment",   "channel",     "reference", "reference_rmse",
                                           "reference_nrmse", "method",   "method_rmse", "method_nrmse",
                                           "delta_nrmse"};
  run.text("summary.csv", text_csv(header, rows));

  const std::vector<CheckResult> checks = evaluate_repro(r, cfg);
  Json acc = Json::array();
  bool all = true;
  std::string check_text;
  for (const CheckResult& ch : checks) {
    acc.push_back({{"criterion", ch.criterion}, {"name", ch.name}, {"pass", ch.pass}, {"detail", ch.detail}});
    all = all && ch.pass;
    check_text += std::string(ch.pass ? "PASS" : "FAIL") + "  " + std::to_string(ch.criterion) + "  " + ch.name +
                  "  " + ch.detail + "\n";
  }
  run.json("acceptance.json", {{"checks", acc}, {"pass", all}});

  std::ostringstream txt;
  txt << "hforce repro, seed " << cfg.seed << "\n\n";
  txt << "Excitation condition number: " << fmt(r.excite.report.cond_before) << " -> "
      << fmt(r.excite.report.cond_after) << "\n";
  txt << "Noiseless base-parameter relative error: " << fmt(r.ident.base_rel_err) << "\n";
  txt << "Held-out torque NRMSE per joint:";
  for (Eigen::Index j = 0; j < r.ident.heldout.nrmse.size(); ++j) txt << " " << fmt(r.ident.heldout.nrmse(j), "%.4f");
  txt << "\n\nComparisons (delta = method NRMSE - reference NRMSE; negative favours the method)\n\n";
  std::vector<std::vector<std::string>> short_rows;
  for (const auto& row : rows) short_rows.push_back({row[0], row[1], row[2], row[4], row[5], row[7], row[8]});
  txt << aligned({"experiment", "channel", "reference", "nrmse", "method", "nrmse", "delta"}, short_rows);
  txt << "\nChecks\n\n" << check_text;
  run.text("summary.txt", txt.str());

  run.manifest().extra = {{"pass", all}, {"checks", acc}};
  run.finish();
  if (inv.strict && !all) {
    std::string failed;
    for (const CheckResult& ch : checks) {
      if (!ch.pass) failed += (failed.empty() ? "" : ", ") + std::to_string(ch.criterion) + " " + ch.name;
    }
    throw AcceptanceFailure("acceptance checks failed: " + failed);
  }
  return 0;
}

// --- report ------------------------------------------------------------------------------

int run_report(const Invocation& inv) {
  Run run(inv, false);
  std::vector<std::string> dirs = inv.runs;
  if (run.config().contains("runs")) {
    for (const Json& d : run.config().at("runs")) {
      require(d.is_string(), "config: runs must be a list of directories", kCfg);
      dirs.push_back((run.base() / d.get<std::string>()).string());
    }
  }
  struct Row {
    std::string run_id, config, report, channel;
    int index;
    double rmse, nrmse, range;
  };
  std::vector<Row> rows;
  std::map<std::string, std::map<std::string, double>> nrmse_by;  // run id -> "report:channel" -> nrmse
  for (const std::string& dir : dirs) {
    const fs::path mpath = fs::path(dir) / "manifest.json";
    require(fs::is_regular_file(mpath), "no manifest.json in run directory " + dir, kData);
    io::RunManifest m;
    try {
      m = io::manifest_from_json(io::read_json(mpath));
    } catch (const Error& e) {
      throw Error(kData, dir + ": " + e.what());
    }
    run.manifest().inputs.push_back({mpath.string(), io::sha256_file(mpath)});
    const std::string id = fs::path(dir).lexically_normal().filename().string().empty()
                               ? fs::path(dir).lexically_normal().parent_path().filename().string()
                               : fs::path(dir).lexically_normal().filename().string();
    const std::string config = m.configs.empty() ? "-" : m.configs.front().path + "@" + m.configs.front().sha256.substr(0, 12);
    for (const io::FileRecord& f : m.outputs) {
      if (f.path.size() < 5 || f.path.substr(f.path.size() - 5) != ".json" || f.path.find("metrics") == std::string::npos) continue;
      const Json j = io::read_json(fs::path(dir) / f.path);
      if (!j.contains("channels")) continue;
      const MetricReport r = io::metrics_from_json(j);
      const std::string name = f.path.substr(0, f.path.size() - 5);
      for (std::size_t c = 0; c < r.channels.size(); ++c) {
        const auto i = static_cast<Eigen::Index>(c);
        rows.push_back({id, config, name, r.channels[c], static_cast<int>(c), r.rmse(i), r.nrmse(i), r.range(i)});
        nrmse_by[id][name + ":" + r.channels[c]] = r.nrmse(i);
      }
    }
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return std::tie(a.run_id, a.report, a.index) < std::tie(b.run_id, b.report, b.index);
  });

  // Hybrid minus model NRMSE where a run holds both reports of an experiment.
  auto delta = [&](const Row& row) -> std::optional<double> {
    const std::string tag = "_hybrid";
    const auto pos = row.report.rfind(tag);
    if (pos == std::string::npos || pos + tag.size() != row.report.size()) return std::nullopt;
    const auto& by = nrmse_by[row.run_id];
    const auto it = by.find(row.report.substr(0, pos) + "_model:" + row.channel);
    if (it == by.end()) return std::nullopt;
    return row.nrmse - it->second;
  };
  const std::vector<std::string> header = {"run_id", "config", "report", "channel", "rmse", "nrmse", "range",
                                           "hybrid_minus_model_nrmse"};
  std::vector<std::vector<std::string>> csv_rows, txt_rows;
  for (const Row& r : rows) {
    const std::optional<double> d = delta(r);
    csv_rows.push_back({r.run_id, r.config, r.report, r.channel, io::format_double(r.rmse), io::format_double(r.nrmse),
                        io::format_double(r.range), d ? io::format_double(*d) : ""});
    txt_rows.push_back({r.run_id, r.config, r.report, r.channel, fmt(r.rmse, "%.4g"), fmt(r.nrmse, "%.4f"),
                        fmt(r.range, "%.4g"), d ? fmt(*d, "%+.4f") : ""});
  }
  run.text("report.csv", text_csv(header, csv_rows));
  run.text("report.txt", aligned(header, txt_rows));
  run.manifest().extra = {{"runs", static_cast<int>(dirs.size())}, {"rows", static_cast<int>(rows.size())}};
  run.finish();
  return 0;
}

// --- help footers ------------------------------------------------------------------------

const char* const kExciteHelp = R"(Config (JSON):
  model         "rcm6" | "psm" | "planar2" | model file | inline model object
  qd_max        [n] velocity bound per joint (required)
  q_min, q_max  [n] optional position box (default: model limits)
  cart_min, cart_max  [3] optional Cartesian box for the tip
  n_harmonics   int, default 6
  f_f           Hz, default 0.18
  budget        total simplex iterations, default 1500
  n_starts      default 4
  rate          Hz for the reported condition numbers, default 200
  opt_rate      Hz used inside the search, default 20
  n_probe       samples for the base-parameter reduction, default 200
Outputs: trajectory.json, trajectory.csv (one period), excite_report.json, manifest.json
--seed drives the reduction probes and the multistart.)";

const char* const kSimulateHelp = R"(Config (JSON scenario):
  model, delta_true   preset name ("rcm6") or file; delta_true may be an inline parameter object
  dt                  integration step, default 1e-3
  gains               {kp: [n], kd: [n], gravity_ff: bool} (rcm6 has defaults)
  trocar              {enabled, shaft_frame, k_t, c_t, port: [3]} or {..., q_ref: [n], depth, rcm: [3]}
  noise               {tau_std (default 0.005), tau_std_joint: [n], tau_rel, qd_std}
  rate, duration      logging rate (Hz) and length (s)
  qd_max              [n] velocity bound for random motion
  trajectory          trajectory file or inline Fourier trajectory to replay
  motion              {lo: [n], hi: [n], n_harmonics, f_f, span} random motion box when no trajectory
  contact             {t: [k], force: [[3]...]} or {random: {peak, knot_dt}}
  log_qdd             also log true accelerations, default false
Outputs: log.csv (t,q*,qd*,tau*[,qdd*]), truth.csv (t,tau_clean_*,Fx,Fy,Fz), reference.json,
         contact.json (when contact is scripted), manifest.json
--seed drives the random motion, the random contact and the noise.)";

const char* const kIdentifyHelp = R"(Config (JSON):
  model         preset name, model file or inline model
  log           log CSV relative to the config file
  mode          "ls" (unconstrained base parameters) or "feasible" (default "ls")
  preprocess    {fc (Hz, <= 0 disables filtering), filter_q, use_logged_qdd, coulomb_width}
  n_probe       default 200
  max_iter      feasible mode only, default 400
Outputs: identified.json, delta.json (feasible mode), manifest.json
--seed drives the base-parameter reduction; equal inputs give byte-identical outputs.)";

const char* const kTrainHelp = R"(Config (JSON):
  model, identified   model reference and identified.json from `identify`
  logs                list of in-trocar log CSVs without tip contact
  preprocess          as for `identify`
  train               {epochs, lr, batch, window, hidden, patience, factor, threshold,
                       train_frac, val_frac, test_frac, beta1, beta2, eps}
Outputs: nets.json (per-joint nets, normalization and loss history), manifest.json
--seed drives initialization, the split and the batch order.)";

const char* const kEstimateHelp = R"(Config (JSON):
  model, identified   model reference and identified.json
  nets                optional nets.json; without it only the free-space model is used
  log                 log CSV
  preprocess          as for `identify`
  sigma_min           pseudo-inverse cutoff, default 1e-4
  force_only          default true
  frame, report_rotation  label and 3 x 3 rotation of the reporting frame
Outputs: estimates.csv (t,Fx,Fy,Fz[,Tx,Ty,Tz],flag; flag 0 ok, 1 singular, 2 warm-up),
         torque.csv (t,tau_hat_*), manifest.json)";

const char* const kEvaluateHelp = R"(Config (JSON):
  estimate, reference  CSV files with equal row counts
  columns              optional [[estimate_col, reference_col], ...]; default: shared names
  skip_flagged         drop rows whose estimate flag is non-zero, default true
Outputs: metrics.json, metrics.csv (channel,rmse,nrmse,range; nrmse = rmse / reference range),
         manifest.json)";

const char* const kReproHelp = R"(Config (JSON): every key is optional and falls back to the defaults.
  quick           true selects the reduced smoke-run defaults
  rate, qd_max, n_harmonics, f_f, excite_budget, excite_opt_rate, ident_periods, feasible
  noise           {tau_std, tau_std_joint, tau_rel, qd_std}
  preprocess      {fc, filter_q, use_logged_qdd, coulomb_width}
  heldout, workspace_a, workspace_b, trocar_train, trocar_test
                  motion boxes {lo, hi, n_logs, duration, n_harmonics, f_f, span}
  mismatch_channels, q_ref, port_depth, k_t, c_t, force_peak, force_knot_dt, run_noiseless
  learner, train  training configs as for `train-trocar`
Outputs: config_resolved.json, reduction.json, excitation/, identification/, mismatch/,
         variants/<name>/ (identified model, nets, contact log and truth, estimates),
         metrics/*.json, summary.csv, summary.txt, acceptance.json, manifest.json
--strict exits with code 4 when any acceptance check fails.)";

const char* const kReportHelp = R"(Inputs: run directories as positional arguments and/or a config {runs: [dir, ...]}.
Every metrics/*.json (or metrics.json) listed in a run manifest becomes one row per channel.
Outputs: report.csv and report.txt with columns
  run_id,config,report,channel,rmse,nrmse,range,hybrid_minus_model_nrmse
sorted by run id, then report, then channel. With no runs only the header is written.)";

}  // namespace hforce::cli
