#pragma once

// File formats: JSON documents for models, parameters, fits, nets, metrics, scenarios
// and run manifests; CSV for time series. Doubles are written in shortest round-trip
// form, so a write followed by a read reproduces every value exactly.

#include "hforce/experiments.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hforce::io {

using Json = nlohmann::json;
namespace fs = std::filesystem;

// --- plain files -----------------------------------------------------------------

Json read_json(const fs::path& path);
/// Two-space indented, keys sorted, trailing newline.
void write_json(const fs::path& path, const Json& doc);
std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const fs::path& path);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

// --- Eigen helpers ---------------------------------------------------------------

Json to_json(const VectorXd& v);
Json to_json(const MatrixXd& m);  // list of rows
VectorXd vector_from_json(const Json& j, const char* what);
MatrixXd matrix_from_json(const Json& j, const char* what);

// --- domain documents ------------------------------------------------------------

/// Frame records (parent, a_prev, alpha_prev, d, theta, joint_kind, joint_index, sign,
/// offset), the coupling blocks as row-major matrices, gravity, tip frame and limits.
/// Frames driven by several coordinates list them under "terms" instead.
Json to_json(const KinematicModel& model);
KinematicModel model_from_json(const Json& j);

/// Name to value, plus the flat-index layout table.
Json to_json(const DynamicParams& delta);
DynamicParams params_from_json(const Json& j, const KinematicModel& model);

Json to_json(const BaseReduction& red);
BaseReduction reduction_from_json(const Json& j);

Json to_json(const FourierTrajectory& traj);
FourierTrajectory trajectory_from_json(const Json& j);

Json to_json(const IdentifiedModel& idm);
IdentifiedModel identified_from_json(const Json& j);

Json to_json(const CorrectionNet& net);
CorrectionNet net_from_json(const Json& j);
Json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const Json& j, TrainConfig base = {});
/// Nets with the training configuration echoed and a history summary per joint.
Json to_json(const TrocarModel& tm, const TrainConfig& cfg);
TrocarModel trocar_from_json(const Json& j);

Json to_json(const MetricReport& r);
MetricReport metrics_from_json(const Json& j);

Json to_json(const ContactScript& s);
ContactScript contact_from_json(const Json& j);

Json to_json(const IdentifyOptions& p);
IdentifyOptions preprocess_from_json(const Json& j, IdentifyOptions base = {});
NoiseConfig noise_from_json(const Json& j, NoiseConfig base = {});

Json to_json(const MotionConfig& m);
MotionConfig motion_from_json(const Json& j, MotionConfig base);

/// Missing keys keep the values of `ReproConfig::defaults(quick)`.
Json to_json(const ReproConfig& cfg);
ReproConfig repro_config_from_json(const Json& j);

// --- scenario config ---------------------------------------------------------------

/// Everything `simulate` needs: plant, reference motion, optional contact and timing.
/// "model" and "delta_true" name either a preset ("rcm6", "psm") or a file relative
/// to the config directory.
struct Scenario {
  PlantConfig plant;
  std::optional<FourierTrajectory> trajectory;  // replayed when given
  MotionConfig motion;                          // otherwise random motion in a box
  VectorXd qd_max;
  ContactScript contact;
  double random_contact_peak = 0.0;  // > 0 draws a contact script from the run seed
  double random_contact_knot_dt = 1.0;
  double rate = 200.0;
  double duration = 10.0;
};

/// Noise defaults to tau_std = 0.005 when a "noise" block is present without it.
Scenario scenario_from_json(const Json& j, const fs::path& base_dir);

struct ScenarioRun {
  GeneratedData data;
  FourierTrajectory reference;  // replayed or drawn
  ContactScript contact;        // empty without contact
};

/// Simulates a scenario; `seed` drives the random motion, the random contact and the noise.
ScenarioRun simulate_scenario(const Scenario& s, std::uint64_t seed, bool log_qdd = false);

/// Resolves a preset name or a model file path.
KinematicModel load_model(const Json& ref, const fs::path& base_dir);

// --- CSV -----------------------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  MatrixXd data;  // one row per line

  int column(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(const fs::path& path);
void write_csv(const fs::path& path, const CsvTable& table);

/// Header t,q1..qn,qd1..qdn,tau1..taun[,qdd1..qddn].
CsvTable log_table(const SampleLog& log);
SampleLog log_from_table(const CsvTable& table);

/// Header t,tau_clean_1..n,Fx,Fy,Fz.
CsvTable sidecar_table(const VectorXd& t, const MatrixXd& tau_clean, const MatrixXd& force);

/// Header t,Fx,Fy,Fz[,Tx,Ty,Tz],flag.
CsvTable estimates_table(const std::vector<WrenchEstimate>& est);

/// Sampled trajectory: t,q1..qn over one period.
CsvTable trajectory_table(const FourierTrajectory& traj, double rate);

// --- run manifests -------------------------------------------------------------------

struct FileRecord {
  std::string path;
  std::string sha256;
};

struct RunManifest {
  std::string subcommand;
  std::vector<FileRecord> configs;
  std::uint64_t seed = 0;
  std::vector<FileRecord> inputs;
  std::vector<FileRecord> outputs;  // paths relative to the output directory
  std::vector<std::pair<std::string, double>> stage_seconds;
  Json extra = Json::object();       // subcommand-specific summary values

  /// Hash of everything except the wall-clock timings.
  std::string content_hash() const;
  Json to_json() const;
};

RunManifest manifest_from_json(const Json& j);

std::string tool_version();

}  // namespace hforce::io
