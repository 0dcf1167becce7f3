#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "depflux/model_spec.hpp"

namespace depflux {

/// Every problem found while reading a configuration, not just the first.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const noexcept { return errors_; }

 private:
  std::vector<std::string> errors_;
};

using ParamValue = std::variant<double, std::string>;

struct ModelConfig {
  std::string name = "asep";
  std::map<std::string, ParamValue> params;

  bool operator==(const ModelConfig&) const = default;
};

/// Names accepted in `checks`.
const std::vector<std::string>& known_checks();

struct ExperimentConfig {
  ModelConfig model;
  std::optional<double> theta;
  std::optional<double> rho;
  std::size_t L = 512;
  double t = 4.0;
  double V = 0.0;
  std::uint64_t replicates = 10'000;
  std::uint64_t seed = 1;
  /// Absent: every check. Present and empty: none.
  std::optional<std::vector<std::string>> checks;
  std::string output = ".";
  double eps = 1e-12;
  std::size_t state_cap = 200'000;
  std::size_t threads = 1;
  std::optional<std::size_t> window;
  std::size_t oracle_L = 8;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Parses the brace/key-value format:
///
///   # comment
///   asep { p = 0.7 }
///   rho = 0.5
///   L = 512
///   checks = ["flux-variance", "sum-rule"]
///
/// Exactly one model section and exactly one of theta/rho are required.
ExperimentConfig parse_config(const std::string& text);
/// Re-validates a config assembled in code (e.g. after flag overrides).
void validate_config(const ExperimentConfig& config);
/// Canonical text; parse_config(to_text(c)) == c.
std::string to_text(const ExperimentConfig& config);

/// Models with their parameter defaults.
const std::map<std::string, std::map<std::string, ParamValue>>& model_defaults();
/// Builds the rate spec named by the config, filling parameter defaults.
RateSpec build_spec(const ModelConfig& model);
/// theta from the config (solving rho(theta) = rho when rho is given).
double resolve_theta(const ExperimentConfig& config, const RateSpec& spec);

}  // namespace depflux
