#pragma once

#include <string>
#include <vector>

namespace latent_truth::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,  // unexpected error or replay mismatch
  kInputError = 2,
  kNumericalError = 3,
  kDegenerateModel = 4,
};

// Runs one subcommand; args excludes the program name. Never throws.
int run(const std::vector<std::string>& args);

}  // namespace latent_truth::cli
