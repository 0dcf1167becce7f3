#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "depflux/equilibrium.hpp"
#include "depflux/error.hpp"
#include "depflux/rng.hpp"
#include "depflux/stats.hpp"

using namespace depflux;

namespace {

struct Case {
  RateSpec spec;
  double theta;
};

std::vector<Case> builtin_cases() {
  const RateFamily lin{RateFamily::Kind::linear};
  const RateFamily ind{RateFamily::Kind::indicator};
  const RateFamily ex{RateFamily::Kind::exponential, 1.0};
  return {{build_asep(1.0), -0.7},
          {build_asep(0.7), 0.4},
          {build_particle_antiparticle(0.5, 0.4, 1.0), 0.2},
          {build_zero_range(lin, 1.0), 0.0},
          {build_zero_range(lin, 0.8), 1.2},
          {build_zero_range(ind, 0.5), -0.5},
          {build_bricklayers(ex, 1.0), 0.3},
          {build_k_exclusion(2), -0.2},
          {build_k_exclusion(3), 0.6}};
}

double poisson_pmf(int z, double mean) { return std::exp(z * std::log(mean) - mean - std::lgamma(z + 1.0)); }

}  // namespace

TEST(FFactorial, Values) {
  EXPECT_EQ(f_factorial(build_asep(1.0), 0), 1.0);
  EXPECT_NEAR(f_factorial(build_zero_range(RateFamily{RateFamily::Kind::linear}, 1.0), 4), 24.0, 1e-12);
  const RateSpec b = build_bricklayers(RateFamily{RateFamily::Kind::exponential, 1.0}, 1.0);
  EXPECT_NEAR(f_factorial(b, -2), std::exp(3.0), 1e-12);
  EXPECT_NEAR(log_f_factorial(b, -2), 3.0, 1e-12);
}

TEST(FFactorial, RecursionHolds) {
  const RateSpec b = build_bricklayers(RateFamily{RateFamily::Kind::exponential, 0.5}, 1.0);
  for (int z = -6; z < 6; ++z)
    EXPECT_NEAR(log_f_factorial(b, z) + std::log(b.f(z + 1)), log_f_factorial(b, z + 1), 1e-12);
}

TEST(ThetaBounds, BoundedIsWholeLine) {
  const ThetaBounds b = theta_bounds(build_asep(1.0));
  EXPECT_EQ(b.lo, -std::numeric_limits<double>::infinity());
  EXPECT_EQ(b.hi, std::numeric_limits<double>::infinity());
}

TEST(ThetaBounds, ZeroRangeLinearUnboundedAbove) {
  const ThetaBounds b = theta_bounds(build_zero_range(RateFamily{RateFamily::Kind::linear}, 1.0));
  EXPECT_EQ(b.lo, -std::numeric_limits<double>::infinity());
  EXPECT_EQ(b.hi, std::numeric_limits<double>::infinity());
}

TEST(ThetaBounds, ZeroRangeIndicatorCapsAtZero) {
  const ThetaBounds b = theta_bounds(build_zero_range(RateFamily{RateFamily::Kind::indicator}, 1.0));
  EXPECT_EQ(b.hi, 0.0);
  EXPECT_THROW(build_marginal(build_zero_range(RateFamily{RateFamily::Kind::indicator}, 1.0), 0.1), DomainError);
}

TEST(ThetaBounds, BricklayersExponentialBothInfinite) {
  const ThetaBounds b = theta_bounds(build_bricklayers(RateFamily{RateFamily::Kind::exponential, 1.0}, 1.0));
  EXPECT_EQ(b.lo, -std::numeric_limits<double>::infinity());
  EXPECT_EQ(b.hi, std::numeric_limits<double>::infinity());
}

TEST(Marginal, AsepIsBernoulli) {
  for (double theta : {-1.0, 0.0, 0.8}) {
    const Marginal m = build_marginal(build_asep(1.0), theta);
    const double rho = std::exp(theta) / (1.0 + std::exp(theta));
    EXPECT_NEAR(m.prob(1), rho, 1e-15);
    EXPECT_NEAR(m.prob(0), 1.0 - rho, 1e-15);
  }
}

TEST(Marginal, ZeroRangeLinearIsPoisson) {
  const double theta = 0.5;
  const Marginal m = build_marginal(build_zero_range(RateFamily{RateFamily::Kind::linear}, 1.0), theta, 1e-14);
  for (int z = 0; z < 12; ++z) EXPECT_NEAR(m.prob(z), poisson_pmf(z, std::exp(theta)), 1e-13);
  EXPECT_LE(m.truncation_mass(), 1e-14);
}

TEST(Marginal, ParticleAntiparticleWeights) {
  const Marginal m = build_marginal(build_particle_antiparticle(0.5, 1.0, 2.0), 0.0);
  EXPECT_NEAR(m.prob(-1), 1.0 / 2.5, 1e-15);
  EXPECT_NEAR(m.prob(0), 1.0 / 2.5, 1e-15);
  EXPECT_NEAR(m.prob(1), 0.5 / 2.5, 1e-15);
  EXPECT_NEAR(m.Z(), 2.5, 1e-12);
}

TEST(MeanF, Examples) {
  EXPECT_NEAR(mean_f(build_marginal(build_asep(1.0), 0.0)), 0.5, 1e-15);
  EXPECT_NEAR(mean_f(build_marginal(build_zero_range(RateFamily{RateFamily::Kind::linear}, 1.0), 0.0, 1e-14)), 1.0,
              1e-12);
}

TEST(EquilibriumStats, AsepHalfFilling) {
  const EquilibriumStats st = equilibrium_stats(build_marginal(build_asep(1.0), 0.0));
  EXPECT_NEAR(st.rho, 0.5, 1e-15);
  EXPECT_NEAR(st.hydro_flux, 0.25, 1e-15);
  EXPECT_NEAR(st.char_speed, 0.0, 1e-15);
}

TEST(EquilibriumStats, AsepPartialAsymmetry) {
  const RateSpec s = build_asep(0.8);
  const EquilibriumStats st = equilibrium_stats(build_marginal(s, solve_theta_for_rho(s, 0.3)));
  EXPECT_NEAR(st.char_speed, 0.24, 1e-9);
  EXPECT_NEAR(st.hydro_flux, 0.6 * 0.21, 1e-9);
}

TEST(EquilibriumStats, SymmetricKExclusionHasNoDrift) {
  for (double theta : {-0.5, 0.0, 0.9}) {
    const EquilibriumStats st = equilibrium_stats(build_marginal(build_k_exclusion(2), theta));
    EXPECT_NEAR(st.hydro_flux, 0.0, 1e-15);
    EXPECT_NEAR(st.char_speed, 0.0, 1e-15);
  }
}

TEST(FFn, AsepValues) {
  const double rho = 0.3;
  const RateSpec s = build_asep(1.0);
  const Marginal m = build_marginal(s, std::log(rho / (1.0 - rho)));
  EXPECT_NEAR(f_fn(m, 0), rho, 1e-15);
  EXPECT_NEAR(f_fn(m, 1), 0.0, 1e-15);
}

TEST(HatMarginal, AsepConditionsOnEmptyOrigin) {
  const HatMarginal h = hat_marginal(build_marginal(build_asep(1.0), 0.3));
  EXPECT_NEAR(h.prob(0), 1.0, 1e-15);
  EXPECT_NEAR(h.prob(1), 0.0, 1e-15);
}

TEST(HatMarginal, KExclusionSingleOccupancy) {
  const HatMarginal h = hat_marginal(build_marginal(build_k_exclusion(1), 0.0));
  EXPECT_NEAR(h.prob(0), 1.0, 1e-15);
}

TEST(HatMarginal, ZeroRangePoissonFormula) {
  const Marginal m = build_marginal(build_zero_range(RateFamily{RateFamily::Kind::linear}, 1.0), 0.0, 1e-14);
  const HatMarginal h = hat_marginal(m);
  double total = 0.0;
  for (int y = 0; y < 15; ++y) {
    double expect = 0.0;
    for (int z = y + 1; z < 40; ++z) expect += (z - 1) * poisson_pmf(z, 1.0);
    EXPECT_NEAR(h.prob(y), expect, 1e-12) << y;
    total += h.prob(y);
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(SolveTheta, AsepLogit) {
  for (double rho : {0.1, 0.3, 0.5, 0.9}) {
    EXPECT_NEAR(solve_theta_for_rho(build_asep(1.0), rho), std::log(rho / (1.0 - rho)), 1e-8);
  }
}

TEST(SolveTheta, ZeroRangeLogOfDensity) {
  const double theta = solve_theta_for_rho(build_zero_range(RateFamily{RateFamily::Kind::linear}, 1.0), 2.0, 1e-14);
  EXPECT_NEAR(theta, std::log(2.0), 1e-8);
}

TEST(Sampling, DegenerateIsConstant) {
  const SiteDistribution d(3, {1.0});
  Stream rng = make_stream(1, 0);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_site(d, rng), 3);
}

TEST(Sampling, AsepMeanInsideClt) {
  const Marginal m = build_marginal(build_asep(1.0), 0.0);
  Stream rng = make_stream(42, 0);
  const int n = 1'000'000;
  long long sum = 0;
  for (int i = 0; i < n; ++i) sum += m.sample(rng);
  EXPECT_NEAR(static_cast<double>(sum) / n, 0.5, 3.0 * std::sqrt(0.25 / n));
}

TEST(Sampling, PoissonVarianceInsideClt) {
  const Marginal m = build_marginal(build_zero_range(RateFamily{RateFamily::Kind::linear}, 1.0), 0.0);
  Stream rng = make_stream(43, 0);
  const int n = 1'000'000;
  Accumulator acc;
  for (int i = 0; i < n; ++i) acc.update(m.sample(rng));
  // Var of (X - 1)^2 for Poisson(1) is mu4 - 1 = 3.
  EXPECT_NEAR(acc.variance(), 1.0, 3.0 * std::sqrt(3.0 / n));
}

TEST(Sampling, RingHasRequestedLength) {
  Stream rng = make_stream(1, 2);
  EXPECT_EQ(sample_ring(build_marginal(build_k_exclusion(2), 0.0), 17, rng).size(), 17u);
}

// Properties over every builtin model.

TEST(EquilibriumProperty, VarianceIsDensitySlope) {
  for (const auto& c : builtin_cases()) {
    const double h = 1e-4;
    const double up = equilibrium_stats(build_marginal(c.spec, c.theta + h, 1e-15)).rho;
    const double dn = equilibrium_stats(build_marginal(c.spec, c.theta - h, 1e-15)).rho;
    const double var = equilibrium_stats(build_marginal(c.spec, c.theta, 1e-15)).var_omega;
    EXPECT_GT(var, 0.0) << c.spec.name();
    EXPECT_NEAR((up - dn) / (2 * h), var, 1e-6 * var) << c.spec.name();
  }
}

TEST(EquilibriumProperty, MeanFShiftIdentity) {
  // E f = e^theta (1 - mu(z_hi)) on the support [z_lo, z_hi]; truncation
  // adds the dropped mass mu(z_lo - 1) < eps.
  for (const auto& c : builtin_cases()) {
    const double eps = 1e-14;
    const Marginal m = build_marginal(c.spec, c.theta, eps);
    const auto& sp = c.spec.space();
    const double top = m.prob(m.z_hi());
    const double expect = std::exp(c.theta) * (1.0 - top);
    const double tol = sp.bounded() ? 1e-14 : 10 * eps * std::max(1.0, expect) + 1e-14;
    EXPECT_NEAR(mean_f(m), expect, tol) << c.spec.name();
  }
}

TEST(EquilibriumProperty, HatMarginalIsProbability) {
  for (const auto& c : builtin_cases()) {
    const HatMarginal h = hat_marginal(build_marginal(c.spec, c.theta));
    double total = 0.0;
    for (double p : h.probs()) {
      EXPECT_GE(p, -1e-14) << c.spec.name();
      total += p;
    }
    EXPECT_NEAR(total, 1.0, 1e-12) << c.spec.name();
  }
}

TEST(EquilibriumProperty, FMeanIsVariance) {
  for (const auto& c : builtin_cases()) {
    const Marginal m = build_marginal(c.spec, c.theta);
    const EquilibriumStats st = equilibrium_stats(m);
    double total = 0.0, centered = 0.0;
    for (int y = m.z_lo(); y <= m.z_hi(); ++y) {
      total += f_fn(m, y) * m.prob(y);
      centered += g_fn(st, y) * m.prob(y);
    }
    EXPECT_NEAR(total, st.var_omega, 1e-12 * std::max(1.0, st.var_omega)) << c.spec.name();
    EXPECT_NEAR(centered, 0.0, 1e-12 * std::max(1.0, std::abs(st.rho))) << c.spec.name();
  }
}

TEST(EquilibriumProperty, SolveThetaRoundTrip) {
  for (const auto& c : builtin_cases()) {
    const double rho = equilibrium_stats(build_marginal(c.spec, c.theta)).rho;
    const double theta = solve_theta_for_rho(c.spec, rho);
    EXPECT_NEAR(equilibrium_stats(build_marginal(c.spec, theta)).rho, rho, 1e-9) << c.spec.name();
  }
}
