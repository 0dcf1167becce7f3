#pragma once

#include <cstddef>
#include <vector>

#include "depflux/model_spec.hpp"
#include "depflux/rng.hpp"

namespace depflux {

/// A probability distribution on a finite integer interval [z_lo, z_hi] with
/// an inverse-CDF sampler.
class SiteDistribution {
 public:
  SiteDistribution() = default;
  SiteDistribution(int z_lo, std::vector<double> probs);

  int z_lo() const noexcept { return z_lo_; }
  int z_hi() const noexcept { return z_lo_ + static_cast<int>(probs_.size()) - 1; }
  IntInterval support() const noexcept { return {z_lo(), z_hi()}; }
  const std::vector<double>& probs() const noexcept { return probs_; }
  /// Probability of z; zero outside the support.
  double prob(int z) const noexcept;

  double mean() const;
  double variance() const;

  int sample(Stream& rng) const;

 private:
  int z_lo_ = 0;
  std::vector<double> probs_;
  std::vector<double> cdf_;
};

/// Single-site stationary marginal mu_theta(z) proportional to
/// exp(theta z) / f(z)!, truncated to a finite support when I is unbounded.
class Marginal : public SiteDistribution {
 public:
  Marginal(RateSpec spec, double theta, int z_lo, std::vector<double> probs, double log_Z,
           double truncation_mass);

  const RateSpec& spec() const noexcept { return spec_; }
  double theta() const noexcept { return theta_; }
  /// Partition value of the truncated state sum (may overflow to inf; see log_Z).
  double Z() const noexcept;
  double log_Z() const noexcept { return log_Z_; }
  /// Relative mass of the excluded tails (bound), 0 for bounded I.
  double truncation_mass() const noexcept { return truncation_mass_; }

 private:
  RateSpec spec_;
  double theta_;
  double log_Z_;
  double truncation_mass_;
};

/// The size-biased origin marginal used to start a second class particle.
class HatMarginal : public SiteDistribution {
 public:
  using SiteDistribution::SiteDistribution;
};

struct EquilibriumStats {
  double rho = 0.0;         ///< E omega_0
  double var_omega = 0.0;   ///< Var omega_0
  double hydro_flux = 0.0;  ///< H = E r(omega_0, omega_1)
  double flux_cov = 0.0;    ///< Cov(r(omega_0, omega_1), omega_0 + omega_1)
  double char_speed = 0.0;  ///< flux_cov / var_omega
  double mean_s = 0.0;      ///< E S(omega_0, omega_1)
};

struct ThetaBounds {
  double lo;
  double hi;
  bool lo_exact;  ///< closed form (or forced by a finite bound)
  bool hi_exact;
  int horizon;
  /// log f(+/-horizon) and log (f(+/-horizon)!)^(1/horizon); reported for
  /// unbounded sides, NaN otherwise.
  double horizon_log_f_hi;
  double horizon_root_factorial_hi;
  double horizon_log_f_lo;
  double horizon_root_factorial_lo;
};

constexpr double kDefaultTruncation = 1e-12;

/// f(z)! with f(0)! = 1, f(z)! f(z+1) = f(z+1)!.
double f_factorial(const RateSpec& spec, int z);
/// log f(z)!; +inf where f(z)! = inf and -inf where it vanishes.
double log_f_factorial(const RateSpec& spec, int z);

/// Range (theta_lo, theta_hi) of admissible theta. Throws ModelError when the
/// range is degenerate.
ThetaBounds theta_bounds(const RateSpec& spec, int horizon = 200);

/// Builds mu_theta. For unbounded I the support grows until the relative mass
/// of both excluded tails is below eps.
Marginal build_marginal(const RateSpec& spec, double theta, double eps = kDefaultTruncation);

/// E f(omega_0).
double mean_f(const Marginal& m);

/// Single-site and pair-product-measure summaries.
EquilibriumStats equilibrium_stats(const Marginal& m);

/// g(z) = z - rho.
double g_fn(const EquilibriumStats& stats, int z);

/// F(y) = sum_{z > y} g(z) mu(z) / mu(y).
double f_fn(const Marginal& m, int y);

/// Origin law of the second-class-particle start: mu_hat(y) proportional to
/// sum_{z > y} g(z) mu(z).
HatMarginal hat_marginal(const Marginal& m);

/// Inverts rho(theta) by bisection (rho is strictly increasing in theta).
double solve_theta_for_rho(const RateSpec& spec, double rho, double eps = kDefaultTruncation,
                           double tol = 1e-10);

int sample_site(const SiteDistribution& dist, Stream& rng);
std::vector<int> sample_ring(const SiteDistribution& dist, std::size_t L, Stream& rng);

}  // namespace depflux
