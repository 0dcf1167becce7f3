#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "depflux/equilibrium.hpp"
#include "depflux/model_spec.hpp"

namespace depflux {

constexpr std::size_t kDefaultStateCap = 200'000;

/// Mixed-radix enumeration of S^L for the site alphabet S = [z_lo, z_hi].
/// Site 0 is the least significant digit.
class StateIndex {
 public:
  StateIndex(IntInterval alphabet, std::size_t L, std::size_t cap = kDefaultStateCap);

  IntInterval alphabet() const noexcept { return alphabet_; }
  std::size_t sites() const noexcept { return L_; }
  std::size_t size() const noexcept { return size_; }

  std::size_t rank(const std::vector<int>& config) const;
  std::vector<int> unrank(std::size_t k) const;
  int site(std::size_t k, std::size_t i) const noexcept {
    return alphabet_.lo + static_cast<int>((k / stride_[i]) % base_);
  }
  /// Rank after adding delta to site i (caller keeps the result in S).
  std::size_t shift(std::size_t k, std::size_t i, int delta) const noexcept {
    return static_cast<std::size_t>(static_cast<std::int64_t>(k) + delta * static_cast<std::int64_t>(stride_[i]));
  }

 private:
  IntInterval alphabet_;
  std::size_t L_;
  std::size_t base_;
  std::size_t size_;
  std::vector<std::size_t> stride_;
};

/// Continuous-time generator stored row-wise: off-diagonal rates in CSR form
/// plus the diagonal (minus the row's exit rate).
struct Generator {
  std::size_t n = 0;
  std::vector<std::size_t> row_ptr;
  std::vector<std::size_t> col;
  std::vector<double> val;
  std::vector<double> diag;
  /// Moves that would leave a truncated alphabet and were suppressed.
  std::size_t suppressed = 0;

  /// (G v)(x) = sum_y G(x, y) v(y).
  std::vector<double> apply_right(const std::vector<double>& v) const;
  /// (v G)(y) = sum_x v(x) G(x, y).
  std::vector<double> apply_left(const std::vector<double>& v) const;
  /// max_x |sum_y G(x, y)|.
  double row_sum_error() const;
  /// Smallest off-diagonal entry (0 if none).
  double min_off_diagonal() const;
  /// Uniformization rate: max_x |G(x, x)|.
  double max_exit_rate() const;
  /// Dense copy; for tests on small chains.
  std::vector<std::vector<double>> dense() const;
};

/// forward: deposition (y, z) -> (y - 1, z + 1) at rate p(y, z), removal at
/// q(y, z). reversed_time: the orientation of the reversed generator, where
/// p drives (y + 1, z - 1) and q drives (y - 1, z + 1).
enum class Orientation { forward, reversed_time };

struct OracleOptions {
  std::size_t state_cap = kDefaultStateCap;
  /// Site alphabet for unbounded I; moves leaving it are suppressed. Must be
  /// set explicitly to acknowledge truncated dynamics.
  std::optional<IntInterval> truncation;
};

/// Alphabet used for matrix work: I itself when bounded, the acknowledged
/// truncation otherwise. Throws DomainError for unbounded I without one.
IntInterval oracle_alphabet(const RateSpec& spec, const OracleOptions& opts);

Generator build_generator(const RateSpec& spec, const StateIndex& index,
                          Orientation orientation = Orientation::forward);
Generator build_generator(const RateSpec& spec, std::size_t L, const OracleOptions& opts = {});
/// L* built from reversed(spec).
Generator build_reversed_generator(const RateSpec& spec, std::size_t L, const OracleOptions& opts = {});

/// Semigroup actions by uniformization. Accuracy is absolute, relative to the
/// sup norm (right) or l1 norm (left) of the input.
std::vector<double> semigroup_right(const Generator& g, const std::vector<double>& v, double t,
                                    double tol = 1e-13);
std::vector<double> semigroup_left(const Generator& g, const std::vector<double>& v, double t, double tol = 1e-13);
/// Terms allowed for rate-time product lt.
std::size_t uniformization_term_cap(double lt);

/// Product measure mu^{(x) L} over the index.
std::vector<double> product_measure(const SiteDistribution& m, const StateIndex& index);

/// || mu^{(x) L} G ||_inf.
double stationarity_residual(const RateSpec& spec, double theta, std::size_t L, const OracleOptions& opts = {});

/// max over random cylinder pairs of |E(psi L phi) - E(phi L* psi)|.
double adjoint_residual(const RateSpec& spec, double theta, std::size_t L, std::size_t trials, std::uint64_t seed,
                        const OracleOptions& opts = {});

/// |E r*(w0, w1)(w0 - w1) + E S(w0, w1)| under mu (x) mu.
double reversed_flux_residual(const Marginal& m);

struct PairIdentityResiduals {
  double deposition = 0.0;  ///< sum p(y,z) G(y-1,z+1) mu mu vs sum p(z,y) G(y,z) mu mu
  double removal = 0.0;     ///< sum q(y,z) G(y+1,z-1) mu mu vs sum q(z,y) G(y,z) mu mu
};
/// Both change-of-variables identities for a test function G on pairs; G is
/// only evaluated inside the marginal's support.
PairIdentityResiduals pair_identity_residuals(const Marginal& m, const std::function<double(int, int)>& G);

/// Cov(omega_n(t), omega_0(0)) for n = 0..L-1 on the ring.
std::vector<double> two_point_profile(const RateSpec& spec, double theta, std::size_t L, double t,
                                      const OracleOptions& opts = {});
double two_point_exact(const RateSpec& spec, double theta, std::size_t L, double t, std::size_t n,
                       const OracleOptions& opts = {});

/// Law of the second class particle position (mod L) at time t, started at
/// site 0 from mu_hat at the origin and mu elsewhere.
std::vector<double> q_distribution_exact(const RateSpec& spec, double theta, std::size_t L, double t,
                                         const OracleOptions& opts = {});

struct VarJQuadrature {
  double value = 0.0;
  double error_estimate = 0.0;
  double mean_s = 0.0;
};

/// Var J(t) = t E S + 2 int_0^t (t - v) E(r~(v) r~*(0)) dv on the ring, with
/// r on edge (0, 1).
VarJQuadrature var_j_quadrature(const RateSpec& spec, double theta, std::size_t L, double t,
                                const OracleOptions& opts = {});

/// Ring-distance weighted sum sum_n min(n, L - n) Cov(omega_n(t), omega_0(0)).
double ring_weighted_two_point_sum(const std::vector<double>& profile);

}  // namespace depflux
