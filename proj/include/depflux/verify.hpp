#pragma once

#include <string>
#include <vector>

#include "depflux/config.hpp"
#include "depflux/model_spec.hpp"
#include "depflux/stats.hpp"

namespace depflux {

enum ExitCode : int { kExitPass = 0, kExitIdentityFailure = 1, kExitConfigError = 2, kExitInternalError = 3 };

struct VerifyResult {
  std::vector<IdentityReport> reports;
  /// Requested checks that do not apply (e.g. matrix checks on unbounded I).
  std::vector<std::string> skipped;

  bool all_pass() const;
  int exit_code() const { return all_pass() ? kExitPass : kExitIdentityFailure; }
};

/// Runs the requested checks in the fixed order: validation, oracle
/// stationarity / adjoint / reversed flux, the exact second class law on a small ring, then the Monte
/// Carlo identities and the sum rule.
VerifyResult verify_all(const ExperimentConfig& config);
/// Same, for a rate spec supplied directly (the config's model section is
/// only used as a label).
VerifyResult verify_all(const ExperimentConfig& config, const RateSpec& spec);

bool check_requested(const ExperimentConfig& config, const std::string& name);

}  // namespace depflux
