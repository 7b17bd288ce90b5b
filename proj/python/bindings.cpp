#include "hforce/io.hpp"
#include "hforce/presets.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace hforce;
using io::Json;

namespace {

JointState state(const VectorXd& q, const VectorXd& qd, const VectorXd& qdd) { return {q, qd, qdd}; }

Json parse(const std::string& text) { return text.empty() ? Json::object() : Json::parse(text); }

IdentifyOptions prep_from(const std::string& text) {
  return text.empty() ? IdentifyOptions{} : io::preprocess_from_json(Json::parse(text));
}

SampleLog make_log(const VectorXd& t, const MatrixXd& q, const MatrixXd& qd, const MatrixXd& tau,
                   const std::optional<MatrixXd>& qdd) {
  SampleLog log{t, q, qd, tau, qdd ? *qdd : MatrixXd()};
  validate_log(log);
  return log;
}

py::dict metrics_dict(const MetricReport& r) {
  py::dict d;
  d["channels"] = r.channels;
  d["rmse"] = r.rmse;
  d["nrmse"] = r.nrmse;
  d["range"] = r.range;
  return d;
}

}  // namespace

PYBIND11_MODULE(_hforce, m) {
  m.doc() = "Dynamics identification, trocar correction and tip-force estimation";

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  // Kinematics.
  py::class_<KinematicModel>(m, "KinematicModel")
      .def_property_readonly("name", &KinematicModel::name)
      .def_property_readonly("n_joints", &KinematicModel::n_joints)
      .def_property_readonly("n_frames", &KinematicModel::n_frames)
      .def_property_readonly("n_links", &KinematicModel::n_links)
      .def_property_readonly("tip_frame", &KinematicModel::tip_frame)
      .def_property_readonly("q_min", &KinematicModel::q_min)
      .def_property_readonly("q_max", &KinematicModel::q_max)
      .def("to_json", [](const KinematicModel& model) { return io::to_json(model).dump(); });
  m.def("rcm6_preset", &rcm6_preset);
  m.def("psm_preset", [] { return psm_preset(); });
  m.def("planar_chain", [](const std::vector<double>& lengths) { return planar_chain(lengths); }, py::arg("lengths"));
  m.def("model_from_json", [](const std::string& text) { return io::model_from_json(Json::parse(text)); });
  m.def("forward_kinematics", [](const KinematicModel& model, const VectorXd& q) {
    std::vector<Eigen::Matrix4d> out;
    for (const Transform& t : forward_kinematics(model, q)) out.push_back(t.matrix());
    return out;
  });
  m.def("tip_position", &tip_position);
  m.def("spatial_jacobian", &spatial_jacobian);
  m.def("motor_to_joint", [](const KinematicModel& model, const VectorXd& q_m) {
    const JointCoordinates c = motor_to_joint(model, q_m);
    return py::make_tuple(c.q_d, c.q);
  });

  // Dynamics.
  py::class_<DynamicParams>(m, "DynamicParams")
      .def(py::init([](const KinematicModel& model, const VectorXd& values) {
             return DynamicParams(ParamLayout(model), values);
           }),
           py::arg("model"), py::arg("values"))
      .def_property_readonly("values", [](const DynamicParams& d) { return d.values(); })
      .def_property_readonly("names", [](const DynamicParams& d) { return d.layout().names(); })
      .def("to_json", [](const DynamicParams& d) { return io::to_json(d).dump(); });
  m.def("rcm6_true_params", &rcm6_true_params);
  m.def("params_from_json", [](const std::string& text, const KinematicModel& model) {
    return io::params_from_json(Json::parse(text), model);
  });
  m.def("inverse_dynamics",
        [](const KinematicModel& model, const DynamicParams& delta, const VectorXd& q, const VectorXd& qd,
           const VectorXd& qdd) { return inverse_dynamics(model, delta, state(q, qd, qdd)); });
  m.def("regressor", [](const KinematicModel& model, const VectorXd& q, const VectorXd& qd, const VectorXd& qdd) {
    return regressor_row_block(model, state(q, qd, qdd));
  });
  m.def("mass_matrix", &mass_matrix);
  m.def("kinetic_energy", &kinetic_energy);
  m.def("potential_energy", &potential_energy);
  m.def("feasibility_check", [](const DynamicParams& delta) {
    const FeasibilityReport r = feasibility_check(delta);
    std::vector<std::pair<std::string, double>> v;
    for (const FeasibilityViolation& f : r.violations) v.emplace_back(f.what, f.margin);
    return py::make_tuple(r.feasible, v);
  });

  // Base parameters and excitation.
  py::class_<BaseReduction>(m, "BaseReduction")
      .def_readonly("b", &BaseReduction::b)
      .def_readonly("perm", &BaseReduction::perm)
      .def_readonly("recombine", &BaseReduction::recombine)
      .def_property_readonly("n_params", &BaseReduction::n_params);
  m.def("compute_base_reduction",
        [](const KinematicModel& model, int n_probe, std::uint64_t seed, double tol) {
          return compute_base_reduction(model, n_probe, seed, tol);
        },
        py::arg("model"), py::arg("n_probe") = 200,
        py::arg("seed") = 0, py::arg("tol") = 1e-8);
  m.def("base_params", &base_params);
  m.def("reduce_regressor", &reduce_regressor);

  py::class_<FourierTrajectory>(m, "FourierTrajectory")
      .def_readonly("q_offset", &FourierTrajectory::q_offset)
      .def_readonly("a", &FourierTrajectory::a)
      .def_readonly("b", &FourierTrajectory::b)
      .def_readonly("f_f", &FourierTrajectory::f_f)
      .def("to_json", [](const FourierTrajectory& t) { return io::to_json(t).dump(); })
      .def("__call__", [](const FourierTrajectory& t, double time) {
        const JointState s = eval_trajectory(t, time);
        return py::make_tuple(s.q, s.qd, s.qdd);
      });
  m.def("trajectory_from_json", [](const std::string& text) { return io::trajectory_from_json(Json::parse(text)); });
  m.def(
      "optimize_excitation",
      [](const KinematicModel& model, const BaseReduction& red, const VectorXd& qd_max, int n_harmonics, double f_f,
         std::uint64_t seed, int budget, double rate, double opt_rate) {
        ExciteOptions eo;
        eo.sample_rate = rate;
        eo.opt_sample_rate = opt_rate;
        const ExciteResult r = optimize_excitation(model, red, TrajectoryLimits::from_model(model, qd_max),
                                                   n_harmonics, f_f, seed, budget, eo);
        py::dict rep;
        rep["cond_before"] = r.report.cond_before;
        rep["cond_after"] = r.report.cond_after;
        rep["iterations"] = r.report.iterations;
        rep["constraint_margin"] = r.report.constraint_margin;
        return py::make_tuple(r.traj, rep);
      },
      py::arg("model"), py::arg("reduction"), py::arg("qd_max"), py::arg("n_harmonics") = 6, py::arg("f_f") = 0.18,
      py::arg("seed") = 0, py::arg("budget") = 1500, py::arg("rate") = 200.0, py::arg("opt_rate") = 20.0);
  m.def("condition_number", &condition_number);
  m.def("sampled_base_regressor", &sampled_base_regressor);

  // Logs, simulation and identification.
  py::class_<SampleLog>(m, "SampleLog")
      .def(py::init(&make_log), py::arg("t"), py::arg("q"), py::arg("qd"), py::arg("tau"), py::arg("qdd") = py::none())
      .def_readonly("t", &SampleLog::t)
      .def_readonly("q", &SampleLog::q)
      .def_readonly("qd", &SampleLog::qd)
      .def_readonly("tau", &SampleLog::tau)
      .def_readonly("qdd", &SampleLog::qdd)
      .def_property_readonly("n_samples", &SampleLog::n_samples)
      .def_property_readonly("n_joints", &SampleLog::n_joints);
  m.def("read_log", [](const std::string& path) { return io::log_from_table(io::read_csv(path)); });
  m.def("write_log", [](const SampleLog& log, const std::string& path) { io::write_csv(path, io::log_table(log)); });

  m.def(
      "simulate",
      [](const std::string& scenario, std::uint64_t seed, bool log_qdd, const std::string& base_dir) {
        const io::ScenarioRun run = io::simulate_scenario(io::scenario_from_json(Json::parse(scenario), base_dir), seed, log_qdd);
        py::dict d;
        d["log"] = run.data.log;
        d["tau_clean"] = run.data.tau_clean;
        d["force"] = run.data.force;
        d["reference"] = run.reference;
        return d;
      },
      py::arg("scenario"), py::arg("seed") = 0, py::arg("log_qdd") = false, py::arg("base_dir") = ".");

  py::class_<IdentifiedModel>(m, "IdentifiedModel")
      .def_readonly("reduction", &IdentifiedModel::reduction)
      .def_readonly("delta_b", &IdentifiedModel::delta_b)
      .def_readonly("delta", &IdentifiedModel::delta)
      .def_property_readonly("residual_rms", [](const IdentifiedModel& i) { return i.report.residual_rms; })
      .def_property_readonly("cond", [](const IdentifiedModel& i) { return i.report.cond; })
      .def_property_readonly("mode", [](const IdentifiedModel& i) { return i.report.mode; })
      .def("to_json", [](const IdentifiedModel& i) { return io::to_json(i).dump(); });
  m.def("identified_from_json", [](const std::string& text) { return io::identified_from_json(Json::parse(text)); });
  m.def(
      "identify",
      [](const KinematicModel& model, const BaseReduction& red, const SampleLog& log, const std::string& mode,
         const std::string& preprocess) {
        const IdentifyOptions prep = prep_from(preprocess);
        if (mode == "ls") return identify_ls(model, red, log, prep);
        if (mode == "feasible") return identify_feasible(model, red, log, prep);
        throw Error(ErrorKind::kConfig, "mode must be 'ls' or 'feasible'");
      },
      py::arg("model"), py::arg("reduction"), py::arg("log"), py::arg("mode") = "ls", py::arg("preprocess") = "");
  m.def("predict_series", &predict_series);

  // Trocar correction nets.
  py::class_<CorrectionNet>(m, "CorrectionNet")
      .def(py::init([](int d_in, int hidden, std::uint64_t seed) {
             std::mt19937_64 rng(seed);
             return CorrectionNet(d_in, hidden, rng);
           }),
           py::arg("d_in"), py::arg("hidden"), py::arg("seed") = 0)
      .def_readwrite("w1", &CorrectionNet::w1)
      .def_readwrite("b1", &CorrectionNet::b1)
      .def_readwrite("w2", &CorrectionNet::w2)
      .def_readwrite("b2", &CorrectionNet::b2)
      .def_readwrite("in_mean", &CorrectionNet::in_mean)
      .def_readwrite("in_std", &CorrectionNet::in_std)
      .def("forward", &CorrectionNet::forward)
      .def("forward_batch", &CorrectionNet::forward_batch)
      .def("loss_and_grad", [](const CorrectionNet& net, const MatrixXd& x, const VectorXd& y) {
        NetGradient g;
        const double loss = mse_loss(net, x, y, &g);
        py::dict d;
        d["w1"] = g.w1;
        d["b1"] = g.b1;
        d["w2"] = g.w2;
        d["b2"] = g.b2;
        return py::make_tuple(loss, d);
      });
  py::class_<TrocarModel>(m, "TrocarModel")
      .def_readonly("window", &TrocarModel::window)
      .def_readonly("nets", &TrocarModel::nets)
      .def_property_readonly("test_loss", [](const TrocarModel& tm) {
        std::vector<double> v;
        for (const TrainHistory& h : tm.history) v.push_back(h.test_loss);
        return v;
      })
      .def("to_json", [](const TrocarModel& tm) { return io::to_json(tm, TrainConfig{}).dump(); });
  m.def("trocar_from_json", [](const std::string& text) { return io::trocar_from_json(Json::parse(text)); });
  m.def(
      "train_trocar",
      [](const KinematicModel& model, const IdentifiedModel& idm, const std::vector<SampleLog>& logs,
         const std::string& train, const std::string& preprocess) {
        const TrainConfig cfg = io::train_config_from_json(parse(train));
        return train_trocar(build_trocar_dataset(logs, idm, model, cfg.window, prep_from(preprocess)), cfg);
      },
      py::arg("model"), py::arg("identified"), py::arg("logs"), py::arg("train") = "", py::arg("preprocess") = "");

  // Estimation and metrics.
  m.def(
      "expected_torque",
      [](const KinematicModel& model, const IdentifiedModel& idm, const TrocarModel* trocar, const SampleLog& log,
         const std::string& prep) { return expected_torque(model, idm, trocar, preprocess(log, prep_from(prep))); },
      py::arg("model"), py::arg("identified"), py::arg("trocar"), py::arg("log"), py::arg("preprocess") = "");
  m.def(
      "estimate_forces",
      [](const KinematicModel& model, const IdentifiedModel& idm, const TrocarModel* trocar, const SampleLog& log,
         const std::string& preprocess, double sigma_min) {
        WrenchOptions wo;
        wo.sigma_min = sigma_min;
        const auto est = estimate_series(model, idm, trocar, log, prep_from(preprocess), wo);
        MatrixXd f(static_cast<Eigen::Index>(est.size()), 3);
        Eigen::VectorXi flags(f.rows());
        for (Eigen::Index i = 0; i < f.rows(); ++i) {
          f.row(i) = est[static_cast<std::size_t>(i)].force.transpose();
          flags(i) = static_cast<int>(est[static_cast<std::size_t>(i)].flag);
        }
        return py::make_tuple(f, flags);
      },
      py::arg("model"), py::arg("identified"), py::arg("trocar"), py::arg("log"), py::arg("preprocess") = "",
      py::arg("sigma_min") = 1e-4);
  m.def("metric_report", [](const MatrixXd& est, const MatrixXd& ref, const std::vector<std::string>& names) {
    return metrics_dict(metric_report(est, ref, names));
  });

  // End-to-end experiments.
  m.def(
      "run_repro",
      [](const std::string& config, std::uint64_t seed) {
        ReproConfig cfg = io::repro_config_from_json(parse(config));
        cfg.seed = seed;
        ReproResult r;
        {
          py::gil_scoped_release release;
          r = run_repro(cfg);
        }
        py::list checks;
        for (const CheckResult& c : evaluate_repro(r, cfg)) {
          py::dict d;
          d["criterion"] = c.criterion;
          d["name"] = c.name;
          d["pass"] = c.pass;
          d["detail"] = c.detail;
          checks.append(d);
        }
        py::dict metrics;
        metrics["ident_heldout"] = metrics_dict(r.ident.heldout);
        metrics["mismatch_model"] = metrics_dict(r.mismatch.model);
        metrics["mismatch_learner"] = metrics_dict(r.mismatch.learner);
        for (const VariantResult& v : r.variants) {
          metrics[py::str("trocar_" + v.name + "_model")] = metrics_dict(v.trocar.model);
          metrics[py::str("trocar_" + v.name + "_hybrid")] = metrics_dict(v.trocar.hybrid);
          metrics[py::str("force_" + v.name + "_model")] = metrics_dict(v.force.model_metrics);
          metrics[py::str("force_" + v.name + "_hybrid")] = metrics_dict(v.force.hybrid_metrics);
        }
        py::dict out;
        out["checks"] = checks;
        out["metrics"] = metrics;
        out["base_rel_err"] = r.ident.base_rel_err;
        out["config"] = io::to_json(cfg).dump();
        return out;
      },
      py::arg("config") = "", py::arg("seed") = 0);

  m.attr("__version__") = io::tool_version();
}
