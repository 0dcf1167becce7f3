#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "depflux/checks.hpp"
#include "depflux/coupling.hpp"
#include "depflux/dynamics.hpp"
#include "depflux/ensemble.hpp"
#include "depflux/equilibrium.hpp"
#include "depflux/error.hpp"
#include "depflux/model_spec.hpp"
#include "depflux/oracle.hpp"
#include "depflux/rate_cache.hpp"
#include "depflux/stats.hpp"

using namespace depflux;

namespace {

constexpr std::uint64_t kSeed = 20240611;
constexpr std::uint64_t kReplicates = 100'000;
constexpr std::size_t kRing = 512;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::size_t thread_count() { return std::max(1u, std::thread::hardware_concurrency()); }

EnsembleSettings settings(std::uint64_t replicates, std::uint64_t seed) {
  return EnsembleSettings{replicates, seed, 100, thread_count()};
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

std::string fmt(const char* f, double a, double b, double c) {
  char buf[192];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

std::string describe(const IdentityReport& r) {
  return r.identity + " lhs=" + fmt("%.6g", r.lhs) + " rhs=" + fmt("%.6g", r.rhs) + " z=" + fmt("%.3f", r.z) +
         " (max " + fmt("%.3f", r.threshold) + ")";
}

RateSpec with_broken_removal(const RateSpec& base) {
  return RateSpec(
      base.name() + "_broken", base.space(), [base](int z) { return base.f(z); },
      [base](int y, int z) { return base.p(y, z); },
      [base](int y, int z) { return base.q(y, z) + ((y == 0 && z == 1) ? 0.1 : 0.0); });
}

struct StationarityCase {
  RateSpec spec;
  std::vector<double> thetas;
};

std::vector<StationarityCase> stationarity_cases() {
  return {{build_asep(1.0), {-0.8, 0.0, 0.6}},
          {build_asep(0.7), {-0.8, 0.0, 0.6}},
          {build_particle_antiparticle(0.5, 0.4, 1.0), {-0.5, 0.2, 1.0}},
          {build_k_exclusion(2), {-0.7, 0.1, 0.9}}};
}

// Shared Monte Carlo ensembles, built on first use.
struct Ensembles {
  std::optional<PlainEstimates> half_v0, half_v05;
  std::optional<CoupledEstimates> half_coupled;

  const PlainEstimates& plain(double V) {
    auto& slot = V == 0.0 ? half_v0 : half_v05;
    if (!slot) {
      const Marginal m = build_marginal(build_asep(1.0), 0.0);
      slot = estimate_plain(m, V, 4.0, kRing, settings(kReplicates, V == 0.0 ? kSeed : kSeed + 1));
    }
    return *slot;
  }
  const CoupledEstimates& coupled() {
    if (!half_coupled) {
      const Marginal m = build_marginal(build_asep(1.0), 0.0);
      half_coupled = estimate_coupled(m, 0.0, 4.0, kRing, settings(kReplicates, coupled_seed(kSeed)), 0);
    }
    return *half_coupled;
  }
};

Outcome stationarity() {
  double worst = 0.0;
  for (const auto& c : stationarity_cases())
    for (double theta : c.thetas)
      for (std::size_t L : {std::size_t{3}, std::size_t{6}})
        worst = std::max(worst, stationarity_residual(c.spec, theta, L));
  return {worst < 1e-12, fmt("max residual %.3g over 4 models x 3 theta x L in {3,6}", worst)};
}

Outcome adjointness() {
  const double a = adjoint_residual(build_asep(1.0), 0.3, 6, 100, kSeed);
  const double b = adjoint_residual(build_k_exclusion(2), -0.2, 3, 100, kSeed + 1);
  return {a < 1e-10 && b < 1e-10, fmt("ASEP L=6 %.3g, K-exclusion L=3 %.3g", a, b)};
}

Outcome reversed_flux() {
  double bounded = 0.0;
  for (const auto& c : stationarity_cases())
    for (double theta : c.thetas) bounded = std::max(bounded, reversed_flux_residual(build_marginal(c.spec, theta)));
  const double zr =
      reversed_flux_residual(build_marginal(build_zero_range(RateFamily{RateFamily::Kind::linear}, 1.0), 0.0, 1e-14));
  return {bounded < 1e-14 && zr < 1e-10, fmt("bounded max %.3g, zero range %.3g", bounded, zr)};
}

struct ExactSmallRing {
  std::vector<double> profile;
  std::vector<double> law;
  double var = 0.0;
};

const ExactSmallRing& exact_small_ring() {
  static const ExactSmallRing e = [] {
    const RateSpec s = build_asep(1.0);
    ExactSmallRing out;
    out.profile = two_point_profile(s, 0.0, 8, 0.5);
    out.law = q_distribution_exact(s, 0.0, 8, 0.5);
    out.var = equilibrium_stats(build_marginal(s, 0.0)).var_omega;
    return out;
  }();
  return e;
}

Outcome exact_two_point() {
  const auto& e = exact_small_ring();
  double worst = 0.0;
  for (std::size_t n = 0; n < e.profile.size(); ++n) worst = std::max(worst, std::abs(e.profile[n] - e.var * e.law[n]));
  return {worst < 1e-8, fmt("max_n |Cov - Var P(Q = n)| = %.3g on L=8, t=0.5", worst)};
}

Outcome nonnegativity(Ensembles& ens) {
  const auto& e = exact_small_ring();
  const double lowest = *std::min_element(e.profile.begin(), e.profile.end());
  const IdentityReport a = report_nonnegativity(ens.plain(0.0), 3.0);
  const IdentityReport b = report_nonnegativity(ens.plain(0.5), 3.0);
  return {lowest >= -1e-10 && a.pass && b.pass,
          fmt("exact min %.3g; Monte Carlo min Cov/SE %.3f (V=0), %.3f (V=0.5)", lowest, a.z, b.z)};
}

Outcome sum_rule(Ensembles& ens) {
  const auto& e = exact_small_ring();
  double total = 0.0;
  for (double c : e.profile) total += c;
  const double exact_err = std::abs(total - e.var);
  const Marginal m = build_marginal(build_asep(1.0), 0.0);
  const IdentityReport mc = report_sum_rule(ens.plain(0.0), equilibrium_stats(m));
  return {exact_err < 1e-10 && mc.pass && mc.z <= 3.0, fmt("exact error %.3g; ", exact_err) + describe(mc)};
}

Outcome flux_variance(Ensembles& ens) {
  const IdentityReport a = report_flux_variance(ens.plain(0.0));
  const IdentityReport b = report_flux_variance(ens.plain(0.5));
  return {a.z <= 3.0 && b.z <= 3.0, "V=0: " + describe(a) + "; V=0.5: " + describe(b)};
}

Outcome covariance_moment() {
  const double t = 4.0;
  const double rho = 0.3;
  const Marginal asep = build_marginal(build_asep(1.0), std::log(rho / (1 - rho)));
  const EquilibriumStats st = equilibrium_stats(asep);
  // Cov(r, w0 + w1) = rho (1 - rho) (1 - 2 rho) for p = 1.
  const double target = t * rho * (1 - rho) * (1 - 2 * rho);
  const IdentityReport a =
      report_covariance_moment(estimate_plain(asep, 0.0, t, kRing, settings(kReplicates, kSeed + 2)), st, t);
  const Marginal kex = build_marginal(build_k_exclusion(2), 0.0);
  const IdentityReport b = report_covariance_moment(
      estimate_plain(kex, 0.0, t, kRing, settings(kReplicates, kSeed + 3)), equilibrium_stats(kex), t);
  const bool targets = std::abs(a.rhs - target) < 1e-12 && std::abs(b.rhs) < 1e-12;
  return {targets && a.z <= 3.0 && b.z <= 3.0,
          fmt("target %.6g; ", target) + "ASEP: " + describe(a) + "; K-exclusion: " + describe(b)};
}

Outcome flux_variance_abs_q(Ensembles& ens) {
  const Marginal m = build_marginal(build_asep(1.0), 0.0);
  const IdentityReport r = report_flux_variance_abs_q(ens.plain(0.0), ens.coupled(), equilibrium_stats(m));
  return {r.z <= 3.0, describe(r)};
}

Outcome second_class_drift() {
  const double rho = 0.3;
  const Marginal asep = build_marginal(build_asep(1.0), std::log(rho / (1 - rho)));
  const IdentityReport a = report_second_class_drift(
      estimate_coupled(asep, 0.0, 10.0, kRing, settings(kReplicates, coupled_seed(kSeed + 4)), 0),
      equilibrium_stats(asep), 10.0);
  const Marginal zr = build_marginal(build_zero_range(RateFamily{RateFamily::Kind::linear}, 1.0), 0.0);
  const EquilibriumStats zst = equilibrium_stats(zr);
  const IdentityReport b = report_second_class_drift(
      estimate_coupled(zr, 0.0, 5.0, kRing, settings(kReplicates, coupled_seed(kSeed + 5)), 0), zst, 5.0);
  const bool target = std::abs(a.rhs - 10.0 * (1 - 2 * rho)) < 1e-9 && std::abs(b.rhs - 5.0 * zst.char_speed) < 1e-12;
  return {target && a.z <= 3.0 && b.z <= 3.0, "ASEP: " + describe(a) + "; zero range: " + describe(b)};
}

Outcome quadrature() {
  const RateSpec s = build_asep(1.0);
  const std::size_t L = 10;
  const double t = 0.5;
  const VarJQuadrature q = var_j_quadrature(s, 0.0, L, t);
  const double ring = ring_weighted_two_point_sum(two_point_profile(s, 0.0, L, t));
  const Marginal m = build_marginal(s, 0.0);
  const BatchSums sums = run_plain_ensemble(m, L, t, settings(1'000'000, kSeed + 6), 2,
                                            [](const RingConfig& c, std::vector<double>& out) {
                                              const double j = static_cast<double>(c.growth[0]);
                                              out[0] = j;
                                              out[1] = j * j;
                                            });
  const JackknifeResult jk =
      jackknife(sums, [](const std::vector<double>& mu) { return std::vector<double>{mu[1] - mu[0] * mu[0]}; });
  const double z = z_score(jk.estimate[0], q.value, jk.se[0], q.error_estimate);
  const double gap = std::abs(q.value - ring);
  return {z <= 3.0 && gap < 1e-4,
          fmt("quadrature %.8g, Monte Carlo %.6g", q.value, jk.estimate[0]) + fmt(" z=%.3f, ring sum %.8g", z, ring) +
              fmt(" (gap %.3g)", gap)};
}

Outcome coupling_soundness() {
  // eta and zeta of each coupled run against independent single-process runs
  // from the same start, on the pattern of the first three sites.
  const Marginal m = build_marginal(build_asep(0.7), 0.0);
  const HatMarginal h = hat_marginal(m);
  const std::size_t L = 32;
  const double t = 1.0;
  IntInterval w = m.support();
  RateCache cache(m.spec(), w);
  std::vector<std::uint64_t> eta_c(8), zeta_c(8), eta_s(8), zeta_s(8);
  auto cell = [](const std::vector<int>& x) { return static_cast<std::size_t>(4 * x[0] + 2 * x[1] + x[2]); };
  std::uint64_t violations = 0, drift = 0;
  for (std::uint64_t r = 0; r < 10'000; ++r) {
    Stream rng = make_stream(kSeed + 7, r);
    const CoupledConfig start = sample_second_class_start(m, h, L, rng);
    try {
      CoupledProcess proc(cache, start, OrderingCheck::every_event);
      proc.run_until(t, rng);
      proc.verify_invariants();
      const auto& c = proc.config();
      std::int64_t total = 0;
      for (std::size_t i = 0; i < L; ++i) {
        if (c.eta.omega[i] > c.zeta.omega[i]) ++violations;
        total += c.zeta.omega[i] - c.eta.omega[i];
      }
      if (total != start.total_d || c.total_d != start.total_d) ++drift;
      ++eta_c[cell(c.eta.omega)];
      ++zeta_c[cell(c.zeta.omega)];
    } catch (const InvariantViolation&) {
      ++violations;
    }
    Stream a = make_stream(kSeed + 8, r), b = make_stream(kSeed + 9, r);
    ++eta_s[cell(run_until(m.spec(), start.eta, t, a).omega)];
    ++zeta_s[cell(run_until(m.spec(), start.zeta, t, b).omega)];
  }
  const double pe = chi_square_homogeneity(eta_c, eta_s).p_value;
  const double pz = chi_square_homogeneity(zeta_c, zeta_s).p_value;
  return {violations == 0 && drift == 0 && pe > 0.05 && pz > 0.05,
          fmt("ordering violations %.0f, sum d drift %.0f, ", static_cast<double>(violations),
              static_cast<double>(drift)) +
              fmt("chi-square p eta %.3f, zeta %.3f", pe, pz)};
}

Outcome negative_control() {
  // The criterion 1 statistic (max over theta and L) for each broken model.
  // On ASEP the perturbation only shifts q and the result is still an ASEP.
  std::vector<double> residuals;
  for (const auto& c : stationarity_cases()) {
    if (c.spec.name().rfind("asep", 0) == 0) continue;
    const RateSpec broken = with_broken_removal(c.spec);
    double worst = 0.0;
    for (double theta : c.thetas)
      for (std::size_t L : {std::size_t{3}, std::size_t{6}})
        worst = std::max(worst, stationarity_residual(broken, theta, L));
    residuals.push_back(worst);
  }
  const bool pass = std::all_of(residuals.begin(), residuals.end(), [](double r) { return r > 1e-3; });
  return {pass, fmt("broken particle-antiparticle %.3g, broken K-exclusion %.3g (each must exceed 1e-3)", residuals[0],
                    residuals[1])};
}

}  // namespace

int main() {
  Ensembles ens;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"stationarity", stationarity},
      {"adjointness", adjointness},
      {"reversed-flux identity", reversed_flux},
      {"exact two-point vs second class law", exact_two_point},
      {"two-point nonnegativity", [&] { return nonnegativity(ens); }},
      {"ring sum rule", [&] { return sum_rule(ens); }},
      {"flux variance vs weighted covariance", [&] { return flux_variance(ens); }},
      {"first moment of covariance", covariance_moment},
      {"flux variance vs mean |Q|", [&] { return flux_variance_abs_q(ens); }},
      {"mean second class displacement", second_class_drift},
      {"variance quadrature", quadrature},
      {"coupling soundness", coupling_soundness},
      {"negative control", negative_control},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failures;
    std::printf("%s %2zu %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
