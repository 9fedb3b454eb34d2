#ifndef MFG_CLI_HPP
#define MFG_CLI_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "mfg/config.hpp"

namespace mfg::cli {

enum ExitCode : int {
  kOk = 0,
  kValidation = 2,      ///< bad config, flags or input file
  kNonconvergence = 3,  ///< a solver gave up (fixed point, Newton, planning)
  kTolerance = 4,       ///< ran to completion but a requested tolerance was missed
  kOther = 5,
};

/// Subcommand names accepted by run().
const std::vector<std::string>& subcommands();

/// Runs one subcommand and writes result.json, its CSV tables, manifest.json
/// and (on failure) error.json into `run_dir`. `input` names the result file
/// for `validate`. Never throws; the return value is the exit code.
int run(const std::string& subcommand, const ExperimentConfig& config, const std::filesystem::path& run_dir,
        const std::string& input = "");

/// Directory for a run: `out` (or the config's output_dir when empty),
/// placed under $MFG_OUTPUT_ROOT when that is set and the path is relative,
/// then the subcommand name.
std::filesystem::path resolve_run_dir(const std::string& out, const ExperimentConfig& config,
                                      const std::string& subcommand);

/// Entry point of the mfgctl tool: parses flags, builds the config and calls run().
int main(int argc, const char* const* argv);

}  // namespace mfg::cli

#endif  // MFG_CLI_HPP
