#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "depflux/ensemble.hpp"
#include "depflux/equilibrium.hpp"
#include "depflux/stats.hpp"

namespace depflux {

/// Correlation half-width used around [Vt]: the smallest w with
/// P(Poisson(2 c_max t) >= w) < 1e-6.
std::size_t correlation_window(const Marginal& m, double t);

/// Monte Carlo estimates from one stationary plain ensemble. Site offsets n
/// run over [n_lo, n_lo + cov.size()), taken modulo L; every quantity is
/// averaged over all L ring origins within each replicate.
struct PlainEstimates {
  std::int64_t k = 0;  ///< observer index [Vt]
  std::int64_t n_lo = 0;
  std::vector<double> cov;
  std::vector<double> se_cov;
  double var_j = 0.0, se_var_j = 0.0;
  double mean_j = 0.0, se_mean_j = 0.0;
  double weighted_sum = 0.0, se_weighted_sum = 0.0;  ///< sum |k - n| Cov
  double se_var_minus_weighted = 0.0;                ///< paired SE of the difference
  double first_moment = 0.0, se_first_moment = 0.0;  ///< sum n Cov
  double sum_rule = 0.0, se_sum_rule = 0.0;          ///< L Cov(mean w(0), mean w(t))
  std::uint64_t replicates = 0;
};

PlainEstimates estimate_plain(const Marginal& m, double V, double t, std::size_t L, const EnsembleSettings& ens,
                              std::optional<std::size_t> window = std::nullopt);

/// Second class particle estimates; Q is the winding-aware displacement.
struct CoupledEstimates {
  std::int64_t k = 0;
  std::int64_t n_lo = 0;
  std::vector<double> prob;  ///< P(Q(t) = n) for n in the window
  std::vector<double> se_prob;
  double mean_q = 0.0, se_mean_q = 0.0;
  double mean_abs = 0.0, se_mean_abs = 0.0;  ///< E|Q(t) - [Vt]|
  std::uint64_t replicates = 0;
};

CoupledEstimates estimate_coupled(const Marginal& m, double V, double t, std::size_t L, const EnsembleSettings& ens,
                                  std::optional<std::size_t> window = std::nullopt);

/// Seed of the coupled ensemble paired with a plain ensemble seeded `seed`.
std::uint64_t coupled_seed(std::uint64_t seed);

/// Throws DomainError when the ring is too small for (t, window).
void require_light_cone(const Marginal& m, std::size_t L, double t, std::size_t window);

// Report builders. Each fills lhs/rhs/se/z/pass; callers add metadata.
IdentityReport report_flux_variance(const PlainEstimates& e);
IdentityReport report_covariance_moment(const PlainEstimates& e, const EquilibriumStats& st, double t);
IdentityReport report_sum_rule(const PlainEstimates& e, const EquilibriumStats& st);
/// All covariance estimates >= -threshold SE; z holds the most negative cov/SE.
IdentityReport report_nonnegativity(const PlainEstimates& e, double threshold = 3.0);
/// Site-wise comparison; z is the largest site z and the threshold the
/// Sidak-adjusted critical value equivalent to a family-wise z of 3.
IdentityReport report_second_class_law(const PlainEstimates& p, const CoupledEstimates& c, const EquilibriumStats& st);
IdentityReport report_flux_variance_abs_q(const PlainEstimates& p, const CoupledEstimates& c,
                                          const EquilibriumStats& st);
IdentityReport report_second_class_drift(const CoupledEstimates& c, const EquilibriumStats& st, double t);

// Whole checks as listed in the identity catalogue.
IdentityReport check_flux_variance(const Marginal& m, double V, double t, std::size_t L, const EnsembleSettings& ens,
                                   std::optional<std::size_t> window = std::nullopt);
IdentityReport check_covariance_moment(const Marginal& m, double t, std::size_t L, const EnsembleSettings& ens,
                                       std::optional<std::size_t> window = std::nullopt);
/// Returns the second-class-law, flux-variance-abs-q and second-class-drift reports, in that order. The coupled
/// ensemble uses coupled_seed(ens.seed) and the same replicate count.
std::vector<IdentityReport> check_second_class_identities(const Marginal& m, double V, double t, std::size_t L,
                                                          const EnsembleSettings& ens,
                                                          std::optional<std::size_t> window = std::nullopt);

}  // namespace depflux
