#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "depflux/equilibrium.hpp"
#include "depflux/model_spec.hpp"
#include "depflux/rate_cache.hpp"
#include "depflux/rng.hpp"
#include "depflux/sum_tree.hpp"

namespace depflux {

/// Periodic ring of L sites. Edge i joins site i and site (i + 1) mod L;
/// growth[i] counts net bricks laid on that edge since time 0.
struct RingConfig {
  std::vector<int> omega;
  std::vector<int> initial_omega;
  std::vector<std::int64_t> growth;
  double time = 0.0;
  std::int64_t conserved_sum = 0;

  RingConfig() = default;
  explicit RingConfig(std::vector<int> sites);

  std::size_t size() const noexcept { return omega.size(); }
  std::int64_t current_sum() const;
};

struct Event {
  std::size_t edge = 0;
  bool deposition = true;
  double time = 0.0;
};

/// Exact continuous-time simulation of the single process on a ring: global
/// exponential clock, event selection through a SumTree over per-edge total
/// rates, O(log L) work per event.
class RingProcess {
 public:
  /// The cache is shared state owned by the caller (one per thread); it
  /// grows if a site leaves its window.
  RingProcess(RateCache& cache, RingConfig config);

  const RingConfig& config() const noexcept { return config_; }
  RingConfig take_config() && { return std::move(config_); }

  double total_rate() const noexcept { return tree_.total(); }
  double edge_deposition_rate(std::size_t edge) const noexcept { return dep_[edge]; }
  double edge_removal_rate(std::size_t edge) const noexcept { return rem_[edge]; }
  std::uint64_t events() const noexcept { return events_; }

  /// Fires the next event unconditionally. Returns nullopt (and leaves the
  /// state untouched) when every rate is zero.
  std::optional<Event> step(Stream& rng);

  /// Advances to time t (>= current time). A frozen configuration just has
  /// its clock moved.
  void run_until(double t, Stream& rng);

  /// |maintained total - recomputed total| after rebuilding the tree.
  double coherence_error() const { return tree_.coherence_error(); }

 private:
  void refresh_edge(std::size_t edge);
  void apply(std::size_t edge, bool deposition);
  void periodic_checks();

  RateCache* cache_;
  RingConfig config_;
  std::vector<double> dep_;
  std::vector<double> rem_;
  SumTree tree_;
  std::uint64_t events_ = 0;
};

/// RingConfig with i.i.d. sites drawn from `dist`.
RingConfig sample_config(const SiteDistribution& dist, std::size_t L, Stream& rng);

/// Advances `config` to time t with fresh caches; convenience wrapper over
/// RingProcess for one-off runs.
RingConfig run_until(const RateSpec& spec, RingConfig config, double t, Stream& rng);

/// Observer site [V t]: floor for V t >= 0, ceil otherwise.
std::int64_t observer_index(double V, double t);

/// J^(V)(t) = h_[Vt](t) - h_0(0) from growth counters and initial slopes.
/// Throws DomainError when |[Vt]| >= L/2.
std::int64_t flux_j(const RingConfig& config, double V, double t);

/// Largest per-edge total rate over the marginal's support.
double max_edge_rate(const Marginal& m);

/// Finite-ring validity guard:
///   L >= 2 (c_max t + window + 10 sqrt(c_max t)).
bool light_cone_check(const Marginal& m, std::size_t L, double t, std::size_t window);

}  // namespace depflux
