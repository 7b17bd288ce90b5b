#pragma once

// Subcommands of the hforce command-line driver.

#include "hforce/io.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace hforce::cli {

struct Invocation {
  std::string subcommand;
  std::string config;  // path as given on the command line
  std::string out;
  std::uint64_t seed = 0;
  bool strict = false;
  std::vector<std::string> runs;  // report only
};

/// Thrown by `repro --strict` when a threshold fails; maps to exit code 4.
struct AcceptanceFailure : Error {
  explicit AcceptanceFailure(const std::string& what) : Error(ErrorKind::kData, what) {}
};

int run_excite(const Invocation& inv);
int run_simulate(const Invocation& inv);
int run_identify(const Invocation& inv);
int run_train_trocar(const Invocation& inv);
int run_estimate(const Invocation& inv);
int run_evaluate(const Invocation& inv);
int run_repro(const Invocation& inv);
int run_report(const Invocation& inv);

/// Help footers: config schema and output files of each subcommand.
extern const char* const kExciteHelp;
extern const char* const kSimulateHelp;
extern const char* const kIdentifyHelp;
extern const char* const kTrainHelp;
extern const char* const kEstimateHelp;
extern const char* const kEvaluateHelp;
extern const char* const kReproHelp;
extern const char* const kReportHelp;

}  // namespace hforce::cli
