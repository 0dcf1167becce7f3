#include "depflux/ensemble.hpp"

#include <exception>
#include <thread>

#include "depflux/error.hpp"

namespace depflux {

namespace {

std::uint64_t first_replicate(std::size_t batch, std::uint64_t replicates, std::size_t batches) {
  return static_cast<std::uint64_t>((static_cast<std::uint64_t>(batch) * replicates + batches - 1) / batches);
}

IntInterval cache_window(const Marginal& m) {
  IntInterval w = m.support();
  if (m.spec().space().contains(static_cast<long long>(w.hi) + 1)) w.hi += 1;
  return w;
}

/// Runs work(batch, cache, sums) for every batch, spreading batches over
/// threads round-robin. Each batch is handled by exactly one thread.
template <class Work>
BatchSums for_each_batch(const Marginal& m, const EnsembleSettings& s, std::size_t dim, Work work) {
  if (s.replicates < s.batches) throw DomainError("ensemble: need at least as many replicates as batches");
  const std::size_t threads = std::max<std::size_t>(1, std::min(s.threads, s.batches));
  auto spec = std::make_shared<const RateSpec>(m.spec());
  std::vector<BatchSums> partial(threads, BatchSums(dim, s.batches));
  std::vector<std::exception_ptr> errors(threads);
  auto worker = [&](std::size_t k) {
    try {
      RateCache cache(spec, cache_window(m));
      for (std::size_t b = k; b < s.batches; b += threads) work(b, cache, partial[k]);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };
  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < threads; ++k) pool.emplace_back(worker, k);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  BatchSums total(dim, s.batches);
  for (const auto& p : partial) total.merge(p);
  return total;
}

}  // namespace

BatchSums run_plain_ensemble(const Marginal& m, std::size_t L, double t, const EnsembleSettings& settings,
                             std::size_t dim, const PlainObserver& observe, const PlainInit& init) {
  return for_each_batch(m, settings, dim, [&](std::size_t b, RateCache& cache, BatchSums& sums) {
    std::vector<double> obs(dim);
    const std::uint64_t lo = first_replicate(b, settings.replicates, settings.batches);
    const std::uint64_t hi = first_replicate(b + 1, settings.replicates, settings.batches);
    for (std::uint64_t r = lo; r < hi; ++r) {
      Stream rng = make_stream(settings.seed, r);
      RingProcess proc(cache, init ? init(rng) : sample_config(m, L, rng));
      proc.run_until(t, rng);
      std::fill(obs.begin(), obs.end(), 0.0);
      observe(proc.config(), obs);
      sums.add(b, obs);
    }
  });
}

BatchSums run_coupled_ensemble(const Marginal& m, const HatMarginal& hat, std::size_t L, double t,
                               const EnsembleSettings& settings, std::size_t dim, const CoupledObserver& observe) {
  return for_each_batch(m, settings, dim, [&](std::size_t b, RateCache& cache, BatchSums& sums) {
    std::vector<double> obs(dim);
    const std::uint64_t lo = first_replicate(b, settings.replicates, settings.batches);
    const std::uint64_t hi = first_replicate(b + 1, settings.replicates, settings.batches);
    for (std::uint64_t r = lo; r < hi; ++r) {
      Stream rng = make_stream(settings.seed, r);
      SecondClassRun run = run_second_class(cache, m, hat, L, t, rng);
      std::fill(obs.begin(), obs.end(), 0.0);
      observe(run.final, obs);
      sums.add(b, obs);
    }
  });
}

}  // namespace depflux
