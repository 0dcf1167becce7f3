#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "depflux/checks.hpp"
#include "depflux/config.hpp"
#include "depflux/coupling.hpp"
#include "depflux/dynamics.hpp"
#include "depflux/equilibrium.hpp"
#include "depflux/error.hpp"
#include "depflux/manifest.hpp"
#include "depflux/oracle.hpp"
#include "depflux/rate_cache.hpp"
#include "depflux/rng.hpp"
#include "depflux/stats.hpp"
#include "depflux/verify.hpp"

#include "CLI11.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace depflux;

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::string> model;
  std::vector<std::string> params;
  std::optional<double> theta;
  std::optional<double> rho;
  std::optional<std::size_t> L;
  std::optional<double> t;
  std::optional<double> V;
  std::optional<std::uint64_t> replicates;
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<std::string>> checks;
  std::optional<std::string> output;
  std::optional<double> eps;
  std::optional<std::size_t> state_cap;
  std::optional<std::size_t> threads;
  std::optional<std::size_t> window;
  std::optional<std::size_t> oracle_L;
};

void add_config_flags(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config_path, "Experiment config file")->check(CLI::ExistingFile);
  app->add_option("--model", o.model, "asep | particle_antiparticle | zero_range | bricklayers | k_exclusion");
  app->add_option("--param", o.params, "Model parameter key=value (repeatable)");
  app->add_option("--theta", o.theta, "Fugacity parameter theta");
  app->add_option("--rho", o.rho, "Density (theta is solved from it)");
  app->add_option("--L", o.L, "Ring size");
  app->add_option("--t", o.t, "Time horizon");
  app->add_option("--V", o.V, "Observer speed");
  app->add_option("--replicates", o.replicates, "Monte Carlo replicates");
  app->add_option("--seed", o.seed, "Master seed");
  app->add_option("--checks", o.checks, "Comma-separated check names")->delimiter(',');
  app->add_option("--output", o.output, "Output directory");
  app->add_option("--eps", o.eps, "Truncation tolerance for unbounded I");
  app->add_option("--state-cap", o.state_cap, "Largest state space the oracle builds");
  app->add_option("--threads", o.threads, "Worker threads");
  app->add_option("--window", o.window, "Correlation half-width around [Vt]");
  app->add_option("--oracle-L", o.oracle_L, "Ring size for the exact oracle");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError({"cannot read " + path});
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ParamValue parse_param_value(const std::string& text) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (!text.empty() && end == text.c_str() + text.size()) return v;
  return text;
}

ExperimentConfig resolve_config(const Overrides& o) {
  ExperimentConfig c;
  const bool from_file = !o.config_path.empty();
  if (from_file) c = parse_config(read_file(o.config_path));
  std::vector<std::string> errors;
  if (o.model && (!from_file || *o.model != c.model.name)) c.model = ModelConfig{*o.model, {}};
  for (const auto& kv : o.params) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      errors.push_back("--param expects key=value, got '" + kv + "'");
      continue;
    }
    c.model.params[kv.substr(0, eq)] = parse_param_value(kv.substr(eq + 1));
  }
  if (o.theta) {
    c.theta = o.theta;
    c.rho.reset();
  }
  if (o.rho) {
    c.rho = o.rho;
    if (!o.theta) c.theta.reset();
  }
  if (o.L) c.L = *o.L;
  if (o.t) c.t = *o.t;
  if (o.V) c.V = *o.V;
  if (o.replicates) c.replicates = *o.replicates;
  if (o.seed) c.seed = *o.seed;
  if (o.checks) c.checks = *o.checks;
  if (o.output) c.output = *o.output;
  if (o.eps) c.eps = *o.eps;
  if (o.state_cap) c.state_cap = *o.state_cap;
  if (o.threads) c.threads = *o.threads;
  if (o.window) c.window = *o.window;
  if (o.oracle_L) c.oracle_L = *o.oracle_L;
  if (!errors.empty()) throw ConfigError(errors);
  validate_config(c);
  return c;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Runs body(r) for r in [0, n) on `threads` workers, each taking a
/// contiguous block. Results must be written to per-replicate slots.
template <typename Body>
void parallel_replicates(std::uint64_t n, std::size_t threads, Body body) {
  threads = std::max<std::size_t>(1, std::min<std::uint64_t>(threads, std::max<std::uint64_t>(n, 1)));
  if (threads == 1) {
    for (std::uint64_t r = 0; r < n; ++r) body(r, 0);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::uint64_t r = n * w / threads; r < n * (w + 1) / threads; ++r) body(r, w);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string reports_json(const std::vector<IdentityReport>& reports) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) arr.push_back(nlohmann::json::parse(r.to_json()));
  return arr.dump(2) + "\n";
}

void emit_reports(const ExperimentConfig& c, const std::string& command, const std::vector<IdentityReport>& reports,
                  const std::vector<std::string>& skipped, double runtime) {
  const std::string text = reports_json(reports);
  std::cout << text;
  for (const auto& s : skipped) std::cerr << "skipped: " << s << "\n";
  const fs::path dir(c.output);
  const fs::path file = dir / (command + "_reports.json");
  write_file(file, text);
  write_file(dir / (command + "_manifest.json"), make_manifest(command, c, {file.string()}, runtime));
}

int cmd_validate(const ExperimentConfig& c) {
  const RateSpec spec = build_spec(c.model);
  nlohmann::json arr = nlohmann::json::array();
  bool ok = true;
  for (const auto& v : validate(spec)) {
    nlohmann::json j;
    j["condition"] = v.condition;
    j["window"] = {v.window.lo, v.window.hi};
    j["max_residual"] = v.max_residual;
    j["tolerance"] = v.tolerance;
    j["witnesses"] = v.witnesses;
    j["pass"] = v.pass();
    if (!v.detail.empty()) j["detail"] = v.detail;
    arr.push_back(j);
    ok = ok && v.pass();
  }
  std::cout << arr.dump(2) << "\n";
  return ok ? kExitPass : kExitIdentityFailure;
}

int cmd_stats(const ExperimentConfig& c) {
  const RateSpec spec = build_spec(c.model);
  const double theta = resolve_theta(c, spec);
  const Marginal m = build_marginal(spec, theta, c.eps);
  const EquilibriumStats st = equilibrium_stats(m);
  nlohmann::json j;
  j["rho"] = st.rho;
  j["var_omega"] = st.var_omega;
  j["hydro_flux"] = st.hydro_flux;
  j["char_speed"] = st.char_speed;
  j["theta"] = theta;
  j["truncation_mass"] = m.truncation_mass();
  std::cout << j.dump(2) << "\n";
  return kExitPass;
}

int cmd_sample(const ExperimentConfig& c, std::uint64_t count) {
  const RateSpec spec = build_spec(c.model);
  const Marginal m = build_marginal(spec, resolve_theta(c, spec), c.eps);
  Stream rng = make_stream(c.seed, 0);
  std::string out;
  for (std::uint64_t i = 0; i < count; ++i) {
    out += std::to_string(m.sample(rng));
    out += '\n';
  }
  std::cout << out;
  return kExitPass;
}

int cmd_simulate(const ExperimentConfig& c, const std::string& observable) {
  const auto t0 = std::chrono::steady_clock::now();
  const RateSpec spec = build_spec(c.model);
  const Marginal m = build_marginal(spec, resolve_theta(c, spec), c.eps);
  const std::size_t L = c.L;
  const std::int64_t k = observer_index(c.V, c.t);
  std::size_t W = 0;
  if (observable == "two-point" || observable == "flux") {
    W = c.window ? *c.window : correlation_window(m, c.t);
    if (observable == "two-point") require_light_cone(m, L, c.t, W + static_cast<std::size_t>(std::llabs(k)));
  }
  const std::int64_t n_lo = std::min<std::int64_t>(0, k) - static_cast<std::int64_t>(W);
  const std::int64_t n_hi = std::max<std::int64_t>(0, k) + static_cast<std::int64_t>(W);

  std::vector<std::vector<double>> values(c.replicates);
  std::vector<RateCache> caches;
  const std::size_t threads = std::max<std::size_t>(1, c.threads);
  for (std::size_t w = 0; w < threads; ++w) caches.emplace_back(spec, m.support());
  parallel_replicates(c.replicates, threads, [&](std::uint64_t r, std::size_t w) {
    Stream rng = make_stream(c.seed, r);
    RingProcess proc(caches[w], sample_config(m, L, rng));
    proc.run_until(c.t, rng);
    const RingConfig& cfg = proc.config();
    auto& out = values[r];
    if (observable == "flux") {
      out.push_back(static_cast<double>(flux_j(cfg, c.V, c.t)));
    } else if (observable == "snapshot") {
      out.assign(cfg.omega.begin(), cfg.omega.end());
    } else {
      for (std::int64_t n = n_lo; n <= n_hi; ++n) {
        std::int64_t acc = 0;
        for (std::size_t x = 0; x < L; ++x) {
          const auto y = static_cast<std::size_t>(((static_cast<std::int64_t>(x) + n) % static_cast<std::int64_t>(L) +
                                                   static_cast<std::int64_t>(L)) %
                                                  static_cast<std::int64_t>(L));
          acc += static_cast<std::int64_t>(cfg.omega[y]) * cfg.initial_omega[x];
        }
        out.push_back(static_cast<double>(acc) / static_cast<double>(L));
      }
    }
  });

  const fs::path dir(c.output);
  const fs::path file = dir / ("simulate_" + observable + ".csv");
  {
    CsvWriter csv(file);
    csv.row({"replicate", "observable", "value"});
    for (std::uint64_t r = 0; r < c.replicates; ++r) {
      const auto& v = values[r];
      for (std::size_t i = 0; i < v.size(); ++i) {
        std::string name;
        if (observable == "flux")
          name = "J";
        else if (observable == "snapshot")
          name = "omega_" + std::to_string(i);
        else
          name = "P_" + std::to_string(n_lo + static_cast<std::int64_t>(i));
        csv.row({std::to_string(r), name, format_double(v[i])});
      }
    }
  }
  write_file(dir / ("simulate_" + observable + "_manifest.json"),
             make_manifest("simulate --observable " + observable, c, {file.string()}, seconds_since(t0)));
  std::cout << file.string() << "\n";
  return kExitPass;
}

int cmd_second_class(const ExperimentConfig& c) {
  const auto t0 = std::chrono::steady_clock::now();
  const RateSpec spec = build_spec(c.model);
  const Marginal m = build_marginal(spec, resolve_theta(c, spec), c.eps);
  const HatMarginal hat = hat_marginal(m);
  IntInterval support = m.support();
  support.lo = std::min(support.lo, hat.z_lo());
  support.hi = std::max(support.hi, hat.z_hi() + 1);
  const std::size_t threads = std::max<std::size_t>(1, c.threads);
  std::vector<RateCache> caches;
  for (std::size_t w = 0; w < threads; ++w) caches.emplace_back(spec, support);
  std::vector<std::int64_t> q(c.replicates);
  const std::uint64_t seed = coupled_seed(c.seed);
  parallel_replicates(c.replicates, threads, [&](std::uint64_t r, std::size_t w) {
    Stream rng = make_stream(seed, r);
    q[r] = run_second_class(caches[w], m, hat, c.L, c.t, rng).q;
  });

  const fs::path dir(c.output);
  const fs::path per = dir / "second_class.csv";
  const fs::path hist = dir / "second_class_histogram.csv";
  {
    CsvWriter csv(per);
    csv.row({"replicate", "Q"});
    for (std::uint64_t r = 0; r < c.replicates; ++r) csv.row({std::to_string(r), std::to_string(q[r])});
  }
  {
    std::map<std::int64_t, std::uint64_t> counts;
    for (auto v : q) ++counts[v];
    CsvWriter csv(hist);
    csv.row({"site", "frequency"});
    for (const auto& [site, n] : counts)
      csv.row({std::to_string(site), format_double(static_cast<double>(n) / static_cast<double>(c.replicates))});
  }
  write_file(dir / "second_class_manifest.json",
             make_manifest("second-class", c, {per.string(), hist.string()}, seconds_since(t0)));
  std::cout << per.string() << "\n" << hist.string() << "\n";
  return kExitPass;
}

const std::vector<std::string>& oracle_checks() {
  static const std::vector<std::string> names{"stationarity", "adjoint", "reversed-flux",
                                              "two-point",    "q-dist",  "var-j"};
  return names;
}

int cmd_oracle(const ExperimentConfig& c, std::vector<std::string> names) {
  const auto t0 = std::chrono::steady_clock::now();
  if (names.empty()) names = oracle_checks();
  for (const auto& n : names)
    if (std::find(oracle_checks().begin(), oracle_checks().end(), n) == oracle_checks().end())
      throw ConfigError({"unknown oracle check '" + n + "'"});
  const RateSpec spec = build_spec(c.model);
  const double theta = resolve_theta(c, spec);
  const Marginal m = build_marginal(spec, theta, c.eps);
  const double var = equilibrium_stats(m).var_omega;
  OracleOptions opts;
  opts.state_cap = c.state_cap;
  const std::size_t L = c.oracle_L;
  const fs::path dir(c.output);
  std::vector<IdentityReport> reports;
  std::vector<std::string> outputs;
  for (const auto& name : names) {
    const auto s0 = std::chrono::steady_clock::now();
    IdentityReport r;
    if (name == "stationarity") {
      r = exact_report(name, stationarity_residual(spec, theta, L, opts), 0.0, 1e-12);
    } else if (name == "adjoint") {
      r = exact_report(name, adjoint_residual(spec, theta, std::min<std::size_t>(L, 6), 100, c.seed, opts), 0.0,
                       1e-10);
    } else if (name == "reversed-flux") {
      r = exact_report(name, reversed_flux_residual(m), 0.0, spec.space().bounded() ? 1e-14 : 1e-10);
    } else if (name == "two-point") {
      const auto profile = two_point_profile(spec, theta, L, c.t, opts);
      double total = 0.0;
      for (double v : profile) total += v;
      r = exact_report(name, total, var, 1e-10);
      r.note = "sum over the ring against Var(omega_0)";
      const fs::path file = dir / "oracle_two_point.csv";
      CsvWriter csv(file);
      csv.row({"n", "cov"});
      for (std::size_t n = 0; n < profile.size(); ++n) csv.row({std::to_string(n), format_double(profile[n])});
      outputs.push_back(file.string());
    } else if (name == "q-dist") {
      const auto law = q_distribution_exact(spec, theta, L, c.t, opts);
      double total = 0.0;
      for (double v : law) total += v;
      r = exact_report(name, total, 1.0, 1e-10);
      r.note = "total probability";
      const fs::path file = dir / "oracle_q_dist.csv";
      CsvWriter csv(file);
      csv.row({"site", "probability"});
      for (std::size_t n = 0; n < law.size(); ++n) csv.row({std::to_string(n), format_double(law[n])});
      outputs.push_back(file.string());
    } else {
      const VarJQuadrature vq = var_j_quadrature(spec, theta, L, c.t, opts);
      const double ring = ring_weighted_two_point_sum(two_point_profile(spec, theta, L, c.t, opts));
      r = exact_report(name, vq.value, ring, 1e-4);
      r.note = "quadrature against the ring-weighted two-point sum; error estimate " +
               format_double(vq.error_estimate);
    }
    r.model = spec.name();
    r.params = spec.params();
    r.params["theta"] = theta;
    r.params["L"] = static_cast<double>(L);
    r.params["t"] = c.t;
    r.seed = c.seed;
    r.runtime_seconds = seconds_since(s0);
    reports.push_back(std::move(r));
  }
  const std::string text = reports_json(reports);
  std::cout << text;
  const fs::path file = dir / "oracle_reports.json";
  write_file(file, text);
  outputs.push_back(file.string());
  write_file(dir / "oracle_manifest.json", make_manifest("oracle", c, outputs, seconds_since(t0)));
  const bool ok = std::all_of(reports.begin(), reports.end(), [](const IdentityReport& x) { return x.pass; });
  return ok ? kExitPass : kExitIdentityFailure;
}

int cmd_verify(const ExperimentConfig& c, const std::string& command) {
  const auto t0 = std::chrono::steady_clock::now();
  const VerifyResult result = verify_all(c);
  emit_reports(c, command, result.reports, result.skipped, seconds_since(t0));
  return result.exit_code();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deposition-model simulator and identity checker"};
  app.require_subcommand(1);
  Overrides o;

  auto* validate_cmd = app.add_subcommand("validate", "Check the model conditions on the rates");
  auto* stats_cmd = app.add_subcommand("stats", "Equilibrium summaries as JSON");
  auto* sample_cmd = app.add_subcommand("sample-equilibrium", "Draws from the single-site marginal");
  auto* simulate_cmd = app.add_subcommand("simulate", "Stationary runs; per-replicate CSV");
  auto* second_cmd = app.add_subcommand("second-class", "Second class particle runs; Q(t) CSV and histogram");
  auto* oracle_cmd = app.add_subcommand("oracle", "Exact small-ring computations");
  auto* check_cmd = app.add_subcommand("check", "Run the named checks");
  auto* verify_cmd = app.add_subcommand("verify-all", "Run the full check battery");
  for (auto* sub : {validate_cmd, stats_cmd, sample_cmd, simulate_cmd, second_cmd, oracle_cmd, check_cmd, verify_cmd})
    add_config_flags(sub, o);

  std::uint64_t count = 1000;
  sample_cmd->add_option("--count", count, "Number of draws");
  std::string observable = "flux";
  simulate_cmd->add_option("--observable", observable, "flux | snapshot | two-point")
      ->check(CLI::IsMember({"flux", "snapshot", "two-point"}));
  std::vector<std::string> oracle_names;
  oracle_cmd->add_option("names", oracle_names, "stationarity | adjoint | reversed-flux | two-point | q-dist | var-j");
  std::vector<std::string> check_names;
  check_cmd->add_option("names", check_names, "Check names (or use --checks)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitPass : kExitConfigError;
  }

  try {
    ExperimentConfig c = resolve_config(o);
    if (*validate_cmd) return cmd_validate(c);
    if (*stats_cmd) return cmd_stats(c);
    if (*sample_cmd) return cmd_sample(c, count);
    if (*simulate_cmd) return cmd_simulate(c, observable);
    if (*second_cmd) return cmd_second_class(c);
    if (*oracle_cmd) return cmd_oracle(c, oracle_names);
    if (*check_cmd) {
      if (!check_names.empty()) c.checks = check_names;
      if (!c.checks) throw ConfigError({"check: name at least one check"});
      validate_config(c);
      return cmd_verify(c, "check");
    }
    return cmd_verify(c, "verify_all");
  } catch (const ConfigError& e) {
    for (const auto& msg : e.errors()) std::cerr << "config error: " << msg << "\n";
    return kExitConfigError;
  } catch (const ModelError& e) {
    std::cerr << "model error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const DomainError& e) {
    std::cerr << "domain error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternalError;
  }
}
