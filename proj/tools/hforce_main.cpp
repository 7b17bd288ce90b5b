// hforce command-line driver. Exit codes: 0 success, 2 config error, 3 data error,
// 4 acceptance failure under `repro --strict`, 1 anything unexpected. Failures print a
// one-line JSON error record on stderr and, when --out is known, write error.json there.

#include "commands.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <functional>
#include <iostream>
#include <map>

namespace {

using hforce::io::Json;
namespace cli = hforce::cli;

int report_error(const cli::Invocation& inv, const std::string& kind, int code, const std::string& message) {
  const Json rec = {{"error", {{"kind", kind}, {"message", message}, {"subcommand", inv.subcommand}, {"exit_code", code}}}};
  std::cerr << rec.dump() << "\n";
  if (!inv.out.empty()) {
    try {
      hforce::io::write_json(std::filesystem::path(inv.out) / "error.json", rec);
    } catch (...) {
    }
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hforce: dynamics identification, trocar correction and tip-force estimation"};
  app.set_version_flag("--version", hforce::io::tool_version());
  app.require_subcommand(1);
  app.footer("Exit codes: 0 success, 2 config error, 3 data error, 4 acceptance failure (repro --strict).\n"
             "File paths inside a config are relative to the config file. Nothing is written outside --out.");

  cli::Invocation inv;
  std::map<CLI::App*, std::function<int(const cli::Invocation&)>> handlers;
  auto add = [&](const char* name, const char* desc, const char* help, auto fn, bool config_required) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->footer(help);
    auto* c = sub->add_option("--config", inv.config, "JSON config file");
    if (config_required) c->required();
    sub->add_option("--out", inv.out, "output directory (created if missing)")->required();
    sub->add_option("--seed", inv.seed, "seed for every random draw of this invocation")->default_val(0);
    handlers[sub] = fn;
    return sub;
  };
  add("excite", "optimize an excitation trajectory and export it", cli::kExciteHelp, cli::run_excite, true);
  add("simulate", "simulate the plant and write a log with ground truth", cli::kSimulateHelp, cli::run_simulate, true);
  add("identify", "fit dynamic parameters to a log", cli::kIdentifyHelp, cli::run_identify, true);
  add("train-trocar", "train the per-joint trocar correction nets", cli::kTrainHelp, cli::run_train_trocar, true);
  add("estimate", "estimate joint torques and the tip wrench on a log", cli::kEstimateHelp, cli::run_estimate, true);
  add("evaluate", "RMSE and NRMSE of estimates against a reference", cli::kEvaluateHelp, cli::run_evaluate, true);
  CLI::App* repro = add("repro", "run the simulated experiments end to end", cli::kReproHelp, cli::run_repro, true);
  repro->add_flag("--strict", inv.strict, "exit with code 4 when an acceptance check fails");
  CLI::App* report = add("report", "collect metrics of several runs into one table", cli::kReportHelp, cli::run_report, false);
  report->add_option("runs", inv.runs, "run directories");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    for (CLI::App* sub : app.get_subcommands()) inv.subcommand = sub->get_name();
    return report_error(inv, "config", 2, e.what());
  }

  CLI::App* sub = app.get_subcommands().front();
  inv.subcommand = sub->get_name();
  try {
    return handlers.at(sub)(inv);
  } catch (const cli::AcceptanceFailure& e) {
    return report_error(inv, "acceptance", 4, e.what());
  } catch (const hforce::Error& e) {
    switch (e.kind()) {
      case hforce::ErrorKind::kConfig:
      case hforce::ErrorKind::kInvalidArgument:
        return report_error(inv, "config", 2, e.what());
      case hforce::ErrorKind::kData:
        return report_error(inv, "data", 3, e.what());
      case hforce::ErrorKind::kNumerical:
        return report_error(inv, "numerical", 3, e.what());
    }
  } catch (const Json::exception& e) {
    return report_error(inv, "config", 2, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return report_error(inv, "data", 3, e.what());
  } catch (const std::exception& e) {
    return report_error(inv, "internal", 1, e.what());
  }
  return 1;
}
