#include "depflux/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>

#include "depflux/checks.hpp"
#include "depflux/error.hpp"
#include "depflux/equilibrium.hpp"
#include "depflux/oracle.hpp"

namespace depflux {

namespace {

constexpr double kStationarityTol = 1e-12;
constexpr double kAdjointTol = 1e-10;
constexpr double kReversedFluxBoundedTol = 1e-14;
constexpr double kReversedFluxUnboundedTol = 1e-10;
constexpr double kExactSecondClassTol = 1e-8;
constexpr double kExactNonnegTol = 1e-10;
constexpr double kExactSumRuleTol = 1e-10;
constexpr std::size_t kAdjointTrials = 100;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Context {
  const ExperimentConfig& config;
  const RateSpec& spec;
  double theta;
  VerifyResult& out;

  void push(IdentityReport r, double runtime, std::uint64_t replicates = 0) {
    r.model = spec.name();
    r.params = spec.params();
    r.params["theta"] = theta;
    r.params["t"] = config.t;
    r.params["V"] = config.V;
    r.params["L"] = static_cast<double>(config.L);
    r.seed = config.seed;
    if (replicates) r.replicates = replicates;
    r.runtime_seconds = runtime;
    out.reports.push_back(std::move(r));
  }
};

}  // namespace

bool VerifyResult::all_pass() const {
  return std::all_of(reports.begin(), reports.end(), [](const IdentityReport& r) { return r.pass; });
}

bool check_requested(const ExperimentConfig& config, const std::string& name) {
  if (!config.checks) return true;
  return std::find(config.checks->begin(), config.checks->end(), name) != config.checks->end();
}

VerifyResult verify_all(const ExperimentConfig& config) {
  validate_config(config);
  return verify_all(config, build_spec(config.model));
}

VerifyResult verify_all(const ExperimentConfig& config, const RateSpec& spec) {
  validate_config(config);
  VerifyResult result;
  auto want = [&](const char* name) { return check_requested(config, name); };
  if (config.checks && config.checks->empty()) return result;

  const double theta = resolve_theta(config, spec);
  Context ctx{config, spec, theta, result};
  const bool bounded = spec.space().bounded();
  OracleOptions oopts;
  oopts.state_cap = config.state_cap;

  if (want("validate")) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto reports = validate(spec);
    const double rt = seconds_since(t0);
    for (const auto& v : reports) {
      IdentityReport r = exact_report("validate:" + v.condition, v.max_residual, 0.0, v.tolerance);
      r.pass = v.pass();
      if (!v.witnesses.empty()) r.note = std::to_string(v.witnesses.size()) + " witnesses; " + v.detail;
      ctx.push(std::move(r), rt);
    }
  }

  if (want("stationarity")) {
    if (!bounded) {
      result.skipped.push_back("stationarity (unbounded I)");
    } else {
      for (std::size_t L : {std::size_t{3}, std::size_t{6}}) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
          const double res = stationarity_residual(spec, theta, L, oopts);
          IdentityReport r = exact_report("stationarity", res, 0.0, kStationarityTol);
          r.note = "ring L = " + std::to_string(L);
          ctx.push(std::move(r), seconds_since(t0));
        } catch (const DomainError&) {
          result.skipped.push_back("stationarity L = " + std::to_string(L) + " (state cap)");
        }
      }
    }
  }

  if (want("adjoint")) {
    if (!bounded) {
      result.skipped.push_back("adjoint (unbounded I)");
    } else {
      for (std::size_t L : {std::size_t{6}, std::size_t{3}}) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
          const double res = adjoint_residual(spec, theta, L, kAdjointTrials, config.seed, oopts);
          IdentityReport r = exact_report("adjoint", res, 0.0, kAdjointTol);
          r.note = "ring L = " + std::to_string(L) + ", " + std::to_string(kAdjointTrials) + " cylinder pairs";
          ctx.push(std::move(r), seconds_since(t0));
          break;
        } catch (const DomainError&) {
          if (L == 3) result.skipped.push_back("adjoint (state cap)");
        }
      }
    }
  }

  if (want("reversed-flux")) {
    const auto t0 = std::chrono::steady_clock::now();
    const Marginal m = build_marginal(spec, theta, config.eps);
    const double res = reversed_flux_residual(m);
    ctx.push(exact_report("reversed-flux", res, 0.0, bounded ? kReversedFluxBoundedTol : kReversedFluxUnboundedTol),
             seconds_since(t0));
  }

  if (want("exact-second-class")) {
    if (!bounded) {
      result.skipped.push_back("exact-2.5 (unbounded I)");
    } else {
      const auto t0 = std::chrono::steady_clock::now();
      const Marginal m = build_marginal(spec, theta, config.eps);
      const double var = equilibrium_stats(m).var_omega;
      const auto profile = two_point_profile(spec, theta, config.oracle_L, config.t, oopts);
      const auto law = q_distribution_exact(spec, theta, config.oracle_L, config.t, oopts);
      double worst = 0.0, lowest = profile.front(), total = 0.0;
      for (std::size_t n = 0; n < profile.size(); ++n) {
        worst = std::max(worst, std::abs(profile[n] - var * law[n]));
        lowest = std::min(lowest, profile[n]);
        total += profile[n];
      }
      const double rt = seconds_since(t0);
      IdentityReport r = exact_report("exact-second-class", worst, 0.0, kExactSecondClassTol);
      r.note = "max over n of |Cov - Var P(Q = n)|, ring L = " + std::to_string(config.oracle_L);
      ctx.push(std::move(r), rt);
      IdentityReport nn = exact_report("exact-nonnegativity", std::min(lowest, 0.0), 0.0, kExactNonnegTol);
      nn.note = "smallest exact covariance " + std::to_string(lowest);
      ctx.push(std::move(nn), rt);
      ctx.push(exact_report("exact-sum-rule", total, var, kExactSumRuleTol), rt);
    }
  }

  const bool need_plain = want("flux-variance") || want("covariance-moment") || want("second-class-law") ||
                          want("flux-variance-abs-q") || want("sum-rule") || want("nonnegativity");
  const bool need_coupled = want("second-class-law") || want("flux-variance-abs-q") || want("second-class-drift");
  if (need_plain || need_coupled) {
    const Marginal m = build_marginal(spec, theta, config.eps);
    const EquilibriumStats st = equilibrium_stats(m);
    EnsembleSettings ens{config.replicates, config.seed, 100, config.threads};
    if (ens.replicates < ens.batches) ens.batches = std::max<std::size_t>(2, static_cast<std::size_t>(ens.replicates));
    std::optional<PlainEstimates> plain;
    std::optional<CoupledEstimates> coupled;
    double plain_rt = 0.0, coupled_rt = 0.0;
    if (need_plain) {
      const auto t0 = std::chrono::steady_clock::now();
      plain = estimate_plain(m, config.V, config.t, config.L, ens, config.window);
      plain_rt = seconds_since(t0);
    }
    if (need_coupled) {
      const auto t0 = std::chrono::steady_clock::now();
      EnsembleSettings cens = ens;
      cens.seed = coupled_seed(config.seed);
      // The histogram window only matters for the second class law.
      std::optional<std::size_t> w = config.window;
      if (!want("second-class-law") && !w) w = 0;
      coupled = estimate_coupled(m, config.V, config.t, config.L, cens, w);
      coupled_rt = seconds_since(t0);
    }
    if (want("flux-variance")) ctx.push(report_flux_variance(*plain), plain_rt, plain->replicates);
    if (want("covariance-moment"))
      ctx.push(report_covariance_moment(*plain, st, config.t), plain_rt, plain->replicates);
    if (want("second-class-law")) ctx.push(report_second_class_law(*plain, *coupled, st), plain_rt + coupled_rt);
    if (want("flux-variance-abs-q")) ctx.push(report_flux_variance_abs_q(*plain, *coupled, st), plain_rt + coupled_rt);
    if (want("second-class-drift"))
      ctx.push(report_second_class_drift(*coupled, st, config.t), coupled_rt, coupled->replicates);
    if (want("sum-rule")) ctx.push(report_sum_rule(*plain, st), plain_rt, plain->replicates);
    if (want("nonnegativity")) ctx.push(report_nonnegativity(*plain), plain_rt, plain->replicates);
  }
  return result;
}

}  // namespace depflux
