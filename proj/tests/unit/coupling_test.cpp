#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "depflux/coupling.hpp"
#include "depflux/equilibrium.hpp"
#include "depflux/error.hpp"
#include "depflux/rate_cache.hpp"
#include "depflux/stats.hpp"

using namespace depflux;

namespace {

struct Case {
  RateSpec spec;
  double theta;
};

std::vector<Case> coupled_cases() {
  return {{build_asep(1.0), 0.0},
          {build_asep(0.7), -0.4},
          {build_particle_antiparticle(0.5, 0.4, 1.0), 0.1},
          {build_zero_range(RateFamily{RateFamily::Kind::linear}, 0.8), 0.0},
          {build_bricklayers(RateFamily{RateFamily::Kind::exponential, 0.5}, 1.0), 0.2},
          {build_k_exclusion(2), 0.3}};
}

IntInterval coupled_window(const Marginal& m) {
  IntInterval w = m.support();
  if (m.spec().space().contains(static_cast<long long>(w.hi) + 1)) w.hi += 1;
  return w;
}

}  // namespace

TEST(CoupledRates, EqualConfigurationsReduceToSingleProcess) {
  for (const auto& c : coupled_cases()) {
    const IntInterval w = default_window(c.spec.space());
    for (int y = w.lo; y <= w.hi; ++y)
      for (int z = w.lo; z <= w.hi; ++z) {
        const CoupledRates r = coupled_edge_rates(c.spec, y, z, y, z);
        EXPECT_EQ(r[0], 0.0);
        EXPECT_EQ(r[1], 0.0);
        EXPECT_EQ(r[3], 0.0);
        EXPECT_EQ(r[4], 0.0);
        EXPECT_EQ(r[2], c.spec.p(y, z));
        EXPECT_EQ(r[5], c.spec.q(y, z));
      }
  }
}

TEST(CoupledRates, AsepSecondClassJumpsRightOntoHole) {
  const double p = 0.7;
  const CoupledRates r = coupled_edge_rates(build_asep(p), 0, 0, 1, 0);
  EXPECT_DOUBLE_EQ(r[0], p);
  EXPECT_EQ(r[1] + r[2] + r[4] + r[5], 0.0);
}

TEST(CoupledRates, AsepFirstClassOvertakes) {
  const double p = 0.7;
  const CoupledRates r = coupled_edge_rates(build_asep(p), 1, 0, 1, 1);
  EXPECT_DOUBLE_EQ(r[1], p);
  EXPECT_EQ(r[0] + r[2], 0.0);
}

TEST(CoupledRates, NonAttractiveRatesRejected) {
  // Deposition decreasing in the left slope breaks the ordering.
  const RateSpec bad("bad", SiteSpace{0, 2}, [](int z) { return z > 0 ? 1.0 : 0.0; },
                     [](int y, int z) { return (y > 0 && z < 2) ? 3.0 - y : 0.0; }, [](int, int) { return 0.0; });
  EXPECT_THROW(coupled_edge_rates(bad, 1, 0, 2, 0), ModelError);
}

TEST(CoupledConfig, DiscrepancyBookkeeping) {
  RingConfig eta(std::vector<int>{0, 1, 0, 0});
  RingConfig zeta(std::vector<int>{0, 1, 1, 0});
  const CoupledConfig c(eta, zeta);
  EXPECT_EQ(c.total_d, 1);
  ASSERT_TRUE(c.q.has_value());
  EXPECT_EQ(*c.q, 2);
  EXPECT_EQ(c.discrepancy_site(), std::optional<std::size_t>(2));
}

TEST(CoupledConfig, UnorderedPairRejected) {
  EXPECT_THROW(CoupledConfig(RingConfig(std::vector<int>{1, 0}), RingConfig(std::vector<int>{0, 1})), DomainError);
}

TEST(CoupledProcess, IdenticalConfigurationsStayIdentical) {
  const Marginal m = build_marginal(build_asep(0.7), 0.0);
  RateCache cache(m.spec(), coupled_window(m));
  Stream rng = make_stream(1, 0);
  RingConfig x = sample_config(m, 64, rng);
  CoupledProcess proc(cache, CoupledConfig(x, x), OrderingCheck::every_event);
  proc.run_until(5.0, rng);
  EXPECT_EQ(proc.config().eta.omega, proc.config().zeta.omega);
  EXPECT_EQ(proc.config().eta.growth, proc.config().zeta.growth);
  EXPECT_EQ(proc.config().total_d, 0);
}

TEST(SecondClass, TimeZeroIsOrigin) {
  const Marginal m = build_marginal(build_asep(1.0), 0.0);
  Stream rng = make_stream(2, 0);
  EXPECT_EQ(run_second_class(m, hat_marginal(m), 64, 0.0, rng).q, 0);
}

TEST(SecondClass, StartHasOneDiscrepancyAtOrigin) {
  const Marginal m = build_marginal(build_k_exclusion(2), 0.2);
  const HatMarginal h = hat_marginal(m);
  for (std::uint64_t r = 0; r < 200; ++r) {
    Stream rng = make_stream(3, r);
    const CoupledConfig c = sample_second_class_start(m, h, 16, rng);
    EXPECT_EQ(c.total_d, 1);
    EXPECT_EQ(c.discrepancy_site(), std::optional<std::size_t>(0));
    EXPECT_LT(c.eta.omega[0], 2);
  }
}

// Invariants along random coupled trajectories.

TEST(CouplingProperty, RowsReproduceMarginalRates) {
  // Summing rows gives each marginal its own deposition and removal rate.
  Stream rng = make_stream(4, 0);
  for (const auto& c : coupled_cases()) {
    const Marginal m = build_marginal(c.spec, c.theta);
    const IntInterval w = coupled_window(m);
    for (int trial = 0; trial < 500; ++trial) {
      auto pick = [&] { return w.lo + static_cast<int>(rng() % static_cast<std::uint64_t>(w.size())); };
      int ei = pick(), ej = pick();
      int zi = std::min(w.hi, ei + static_cast<int>(rng() % 2)), zj = std::min(w.hi, ej + static_cast<int>(rng() % 2));
      const CoupledRates r = coupled_edge_rates(c.spec, ei, ej, zi, zj);
      for (double v : r) ASSERT_GE(v, 0.0) << c.spec.name();
      const double tol = 1e-12 * std::max(1.0, c.spec.s(zi, zj) + c.spec.s(ei, ej));
      ASSERT_NEAR(r[0] + r[2], c.spec.p(zi, zj), tol) << c.spec.name();
      ASSERT_NEAR(r[1] + r[2], c.spec.p(ei, ej), tol) << c.spec.name();
      ASSERT_NEAR(r[3] + r[5], c.spec.q(zi, zj), tol) << c.spec.name();
      ASSERT_NEAR(r[4] + r[5], c.spec.q(ei, ej), tol) << c.spec.name();
    }
  }
}

TEST(CouplingProperty, BoundedModelsNonnegativeOnWholeSpace) {
  for (const auto& c : coupled_cases()) {
    if (!c.spec.space().bounded()) continue;
    const int lo = *c.spec.space().omega_min, hi = *c.spec.space().omega_max;
    for (int ei = lo; ei <= hi; ++ei)
      for (int ej = lo; ej <= hi; ++ej)
        for (int zi = ei; zi <= hi; ++zi)
          for (int zj = ej; zj <= hi; ++zj)
            for (double v : coupled_edge_rates(c.spec, ei, ej, zi, zj)) ASSERT_GE(v, 0.0) << c.spec.name();
  }
}

TEST(CouplingProperty, OrderAndDiscrepancyPreserved) {
  std::uint64_t seed = 50;
  for (const auto& c : coupled_cases()) {
    const Marginal m = build_marginal(c.spec, c.theta);
    for (int trial = 0; trial < 4; ++trial) {
      Stream rng = make_stream(++seed, 0);
      const std::size_t L = 200 + static_cast<std::size_t>(rng() % 56);
      RingConfig eta = sample_config(m, L, rng);
      std::vector<int> up = eta.omega;
      for (std::size_t i = 0; i < L; ++i)
        if (c.spec.space().contains(static_cast<long long>(up[i]) + 1) && rng() % 3 == 0) ++up[i];
      RateCache cache(c.spec, coupled_window(m));
      CoupledProcess proc(cache, CoupledConfig(eta, RingConfig(up)), OrderingCheck::every_event);
      const std::int64_t total = proc.config().total_d;
      for (int k = 0; k < 3000; ++k) {
        if (!proc.step(rng)) break;
        const auto& cfg = proc.config();
        ASSERT_EQ(cfg.total_d, total);
        for (std::size_t i = 0; i < L; ++i) ASSERT_LE(cfg.eta.omega[i], cfg.zeta.omega[i]) << c.spec.name();
      }
      proc.verify_invariants();
    }
  }
}

TEST(CouplingProperty, SecondClassMovesOneSiteAtATime) {
  for (const auto& c : coupled_cases()) {
    const Marginal m = build_marginal(c.spec, c.theta);
    const HatMarginal h = hat_marginal(m);
    RateCache cache(c.spec, coupled_window(m));
    for (std::uint64_t r = 0; r < 10; ++r) {
      Stream rng = make_stream(60, r);
      CoupledProcess proc(cache, sample_second_class_start(m, h, 512, rng), OrderingCheck::every_event);
      std::int64_t q = *proc.config().q;
      for (int k = 0; k < 2000; ++k) {
        if (!proc.step(rng)) break;
        const std::int64_t now = *proc.config().q;
        ASSERT_LE(std::abs(now - q), 1) << c.spec.name();
        ASSERT_EQ(proc.config().discrepancy_site(),
                  std::optional<std::size_t>(static_cast<std::size_t>(((now % 512) + 512) % 512)));
        q = now;
      }
    }
  }
}

TEST(CouplingStatistics, MarginalsMatchUncoupledProcess) {
  // Both coordinates of the coupling started from (omega, omega + delta_0)
  // must follow the single dynamics from their own starts.
  const Marginal m = build_marginal(build_asep(0.7), 0.0);
  const HatMarginal h = hat_marginal(m);
  const std::size_t L = 16;
  RateCache cache(m.spec(), coupled_window(m));
  std::vector<std::uint64_t> eta_c(4), zeta_c(4), eta_s(4), zeta_s(4);
  for (std::uint64_t r = 0; r < 10'000; ++r) {
    Stream rng = make_stream(70, r);
    const CoupledConfig start = sample_second_class_start(m, h, L, rng);
    CoupledProcess proc(cache, start, OrderingCheck::periodic);
    proc.run_until(1.0, rng);
    ++eta_c[static_cast<std::size_t>(2 * proc.config().eta.omega[0] + proc.config().eta.omega[1])];
    ++zeta_c[static_cast<std::size_t>(2 * proc.config().zeta.omega[0] + proc.config().zeta.omega[1])];

    Stream a = make_stream(71, r), b = make_stream(72, r);
    const RingConfig x = run_until(m.spec(), start.eta, 1.0, a);
    const RingConfig y = run_until(m.spec(), start.zeta, 1.0, b);
    ++eta_s[static_cast<std::size_t>(2 * x.omega[0] + x.omega[1])];
    ++zeta_s[static_cast<std::size_t>(2 * y.omega[0] + y.omega[1])];
  }
  EXPECT_GT(chi_square_homogeneity(eta_c, eta_s).p_value, 0.05);
  EXPECT_GT(chi_square_homogeneity(zeta_c, zeta_s).p_value, 0.05);
}
