#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "depflux/dynamics.hpp"
#include "depflux/equilibrium.hpp"
#include "depflux/rate_cache.hpp"
#include "depflux/rng.hpp"
#include "depflux/sum_tree.hpp"

namespace depflux {

/// Two ordered configurations eta <= zeta on the same ring and clock.
struct CoupledConfig {
  RingConfig eta;
  RingConfig zeta;
  std::vector<int> d;  ///< zeta_i - eta_i
  std::int64_t total_d = 0;
  /// Winding-aware displacement of the second class particle; present only
  /// while total_d == 1.
  std::optional<std::int64_t> q;

  CoupledConfig() = default;
  CoupledConfig(RingConfig eta, RingConfig zeta);

  double time() const noexcept { return eta.time; }
  /// Site index of the single discrepancy, if total_d == 1.
  std::optional<std::size_t> discrepancy_site() const;
};

/// Rows of the basic coupling on one edge (i, j = i + 1), in order:
///   0 zeta deposits alone      p(zeta_i, zeta_j) - p(eta_i, zeta_j)
///   1 eta deposits alone       p(eta_i, eta_j)   - p(eta_i, zeta_j)
///   2 both deposit             p(eta_i, zeta_j)
///   3 zeta removes alone       q(zeta_i, zeta_j) - q(zeta_i, eta_j)
///   4 eta removes alone        q(eta_i, eta_j)   - q(zeta_i, eta_j)
///   5 both remove              q(zeta_i, eta_j)
using CoupledRates = std::array<double, 6>;

/// Throws ModelError when a row is negative beyond -1e-12 (non-attractive
/// rates); smaller negatives are clamped to zero.
CoupledRates coupled_edge_rates(const RateSpec& spec, int eta_i, int eta_j, int zeta_i, int zeta_j);

struct CoupledEvent {
  std::size_t edge = 0;
  int row = 0;
  double time = 0.0;
};

enum class OrderingCheck { periodic, every_event };

/// Exact simulation of the basic coupling; same event engine as RingProcess
/// with six sub-rates per edge.
class CoupledProcess {
 public:
  CoupledProcess(RateCache& cache, CoupledConfig config, OrderingCheck check = OrderingCheck::periodic);

  const CoupledConfig& config() const noexcept { return config_; }
  CoupledConfig take_config() && { return std::move(config_); }
  double total_rate() const noexcept { return tree_.total(); }
  std::uint64_t events() const noexcept { return events_; }
  const CoupledRates& edge_rates(std::size_t edge) const noexcept { return rates_[edge]; }

  std::optional<CoupledEvent> step(Stream& rng);
  void run_until(double t, Stream& rng);

  /// Full recheck of eta <= zeta, d = zeta - eta and sum d = total_d.
  void verify_invariants() const;

 private:
  void refresh_edge(std::size_t edge);
  void apply(std::size_t edge, int row);
  CoupledRates rates_for(std::size_t edge) const;

  RateCache* cache_;
  CoupledConfig config_;
  OrderingCheck check_;
  std::vector<CoupledRates> rates_;
  SumTree tree_;
  std::uint64_t events_ = 0;
};

struct SecondClassRun {
  std::int64_t q = 0;
  CoupledConfig final;
};

/// Draws omega with omega_0 ~ mu_hat and the other sites ~ mu, sets
/// zeta = omega + delta_0 and runs the coupling to time t.
CoupledConfig sample_second_class_start(const Marginal& m, const HatMarginal& hat, std::size_t L, Stream& rng);
SecondClassRun run_second_class(RateCache& cache, const Marginal& m, const HatMarginal& hat, std::size_t L,
                                double t, Stream& rng);
SecondClassRun run_second_class(const Marginal& m, const HatMarginal& hat, std::size_t L, double t, Stream& rng);

}  // namespace depflux
