#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "depflux/coupling.hpp"
#include "depflux/dynamics.hpp"
#include "depflux/equilibrium.hpp"
#include "depflux/stats.hpp"

namespace depflux {

struct EnsembleSettings {
  std::uint64_t replicates = 0;
  std::uint64_t seed = 0;
  std::size_t batches = 100;
  std::size_t threads = 1;
};

/// Writes `dim` observables of one finished replicate into `out`. Called
/// concurrently from worker threads; must not touch shared mutable state.
using PlainObserver = std::function<void(const RingConfig& final, std::vector<double>& out)>;
using CoupledObserver = std::function<void(const CoupledConfig& final, std::vector<double>& out)>;

/// Initial configuration of one replicate; defaults to i.i.d. mu.
using PlainInit = std::function<RingConfig(Stream& rng)>;

/// Replicate r runs on make_stream(seed, r) and lands in batch
/// batch_of(r, replicates, batches); results do not depend on `threads`.
BatchSums run_plain_ensemble(const Marginal& m, std::size_t L, double t, const EnsembleSettings& settings,
                             std::size_t dim, const PlainObserver& observe, const PlainInit& init = {});

/// Second class particle runs: mu_hat at the origin, mu elsewhere.
BatchSums run_coupled_ensemble(const Marginal& m, const HatMarginal& hat, std::size_t L, double t,
                               const EnsembleSettings& settings, std::size_t dim, const CoupledObserver& observe);

}  // namespace depflux
