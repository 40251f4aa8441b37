#pragma once

#include <exception>
#include <ostream>
#include <string>
#include <vector>

#include "dualstream/error.hpp"

namespace dualstream::cli {

/// Stable process exit codes.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,            // anything not listed below
  kInvalidInput = 2,       // bad flags, config, manifest or split files
  kMissingFeatures = 3,    // the feature store cannot serve a sampled timestamp
  kNoCheckpoints = 4,      // evaluate/infer found nothing to load
  kTaxonomyMismatch = 5,   // ensemble members disagree on categories
  kUnsupportedMode = 6,    // e.g. explain on a mean-pool checkpoint
};

class NoCheckpointsError : public Error {
 public:
  using Error::Error;
};

/// Maps an exception onto an exit code. FoldError is unwrapped to the
/// exception nested inside it.
int exit_code_for(std::exception_ptr error);

/// Runs one command line (args[0] is the program name) and returns its exit
/// code. Nothing is thrown; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dualstream::cli
