#include "depflux/checks.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/poisson.hpp>

#include "depflux/dynamics.hpp"
#include "depflux/error.hpp"

namespace depflux {

namespace {

// Plain observable layout.
constexpr std::size_t kMeanJ = 0;
constexpr std::size_t kMeanJ2 = 1;
constexpr std::size_t kDensity0 = 2;
constexpr std::size_t kDensityT = 3;
constexpr std::size_t kDensityProduct = 4;
constexpr std::size_t kPlainHeader = 5;

// Coupled observable layout.
constexpr std::size_t kQ = 0;
constexpr std::size_t kAbsQ = 1;
constexpr std::size_t kCoupledHeader = 2;

double family_alpha() {
  const boost::math::normal_distribution<double> n;
  return 2.0 * boost::math::cdf(boost::math::complement(n, 3.0));
}

std::size_t mod(std::int64_t i, std::size_t L) {
  const auto l = static_cast<std::int64_t>(L);
  return static_cast<std::size_t>(((i % l) + l) % l);
}

struct Window {
  std::int64_t k;
  std::int64_t n_lo;
  std::size_t width;
};

Window make_window(const Marginal& m, double V, double t, std::size_t L, std::optional<std::size_t> window) {
  const std::int64_t k = observer_index(V, t);
  const std::size_t W = window ? *window : correlation_window(m, t);
  require_light_cone(m, L, t, W + static_cast<std::size_t>(std::abs(k)));
  const std::int64_t lo = std::min<std::int64_t>(0, k) - static_cast<std::int64_t>(W);
  const std::int64_t hi = std::max<std::int64_t>(0, k) + static_cast<std::int64_t>(W);
  if (2 * std::max(std::abs(lo), std::abs(hi)) >= static_cast<std::int64_t>(L))
    throw DomainError("window does not fit in half the ring");
  return {k, lo, static_cast<std::size_t>(hi - lo + 1)};
}

double elapsed(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

std::size_t correlation_window(const Marginal& m, double t) {
  const double lambda = 2.0 * max_edge_rate(m) * t;
  if (lambda <= 0.0) return 0;
  const boost::math::poisson_distribution<double> pois(lambda);
  std::size_t w = 0;
  // P(N >= w) = 1 - P(N <= w - 1).
  while (w == 0 || boost::math::cdf(boost::math::complement(pois, static_cast<double>(w - 1))) >= 1e-6) ++w;
  return w;
}

std::uint64_t coupled_seed(std::uint64_t seed) { return splitmix64(seed ^ 0x5ec0'dc1a'55e5'0000ULL); }

void require_light_cone(const Marginal& m, std::size_t L, double t, std::size_t window) {
  if (!light_cone_check(m, L, t, window)) {
    std::ostringstream os;
    os << "ring of L = " << L << " is inside the light cone of t = " << t << " with window " << window
       << " (c_max = " << max_edge_rate(m) << ")";
    throw DomainError(os.str());
  }
}

PlainEstimates estimate_plain(const Marginal& m, double V, double t, std::size_t L, const EnsembleSettings& ens,
                              std::optional<std::size_t> window) {
  const Window w = make_window(m, V, t, L, window);
  const std::size_t dim = kPlainHeader + w.width;
  const double inv_l = 1.0 / static_cast<double>(L);

  auto observe = [&](const RingConfig& c, std::vector<double>& out) {
    const auto& w0 = c.initial_omega;
    const auto& wt = c.omega;
    // prefix[i] = w0[0] + ... + w0[i-1] over two laps.
    std::vector<std::int64_t> prefix(2 * L + 1, 0);
    for (std::size_t i = 0; i < 2 * L; ++i) prefix[i + 1] = prefix[i] + w0[i % L];
    const std::int64_t lap = prefix[L];
    // Sum of w0 over sites a+1 .. a+len (len >= 0), a in [0, L).
    auto run_sum = [&](std::size_t a, std::size_t len) {
      const std::size_t laps = len / L;
      const std::size_t rest = len % L;
      return static_cast<std::int64_t>(laps) * lap + prefix[a + 1 + rest] - prefix[a + 1];
    };
    long double sj = 0.0L, sj2 = 0.0L;
    for (std::size_t x = 0; x < L; ++x) {
      std::int64_t j = c.growth[mod(static_cast<std::int64_t>(x) + w.k, L)];
      if (w.k >= 0)
        j -= run_sum(x, static_cast<std::size_t>(w.k));
      else
        j += run_sum(mod(static_cast<std::int64_t>(x) + w.k, L), static_cast<std::size_t>(-w.k));
      sj += j;
      sj2 += static_cast<long double>(j) * j;
    }
    out[kMeanJ] = static_cast<double>(sj * inv_l);
    out[kMeanJ2] = static_cast<double>(sj2 * inv_l);
    std::int64_t s0 = 0, st = 0;
    for (std::size_t x = 0; x < L; ++x) {
      s0 += w0[x];
      st += wt[x];
    }
    out[kDensity0] = static_cast<double>(s0) * inv_l;
    out[kDensityT] = static_cast<double>(st) * inv_l;
    out[kDensityProduct] = out[kDensity0] * out[kDensityT];
    for (std::size_t idx = 0; idx < w.width; ++idx) {
      const std::size_t shift = mod(w.n_lo + static_cast<std::int64_t>(idx), L);
      std::int64_t acc = 0;
      std::size_t y = shift;
      for (std::size_t x = 0; x < L; ++x) {
        acc += static_cast<std::int64_t>(wt[y]) * w0[x];
        if (++y == L) y = 0;
      }
      out[kPlainHeader + idx] = static_cast<double>(acc) * inv_l;
    }
  };

  const BatchSums sums = run_plain_ensemble(m, L, t, ens, dim, observe);
  const double Ld = static_cast<double>(L);
  // Output layout: var_j, weighted, var_j - weighted, first moment, sum rule, mean_j, cov...
  auto stat = [&](const std::vector<double>& mu) {
    std::vector<double> o(6 + w.width);
    const double var_j = mu[kMeanJ2] - mu[kMeanJ] * mu[kMeanJ];
    double weighted = 0.0, first = 0.0;
    for (std::size_t idx = 0; idx < w.width; ++idx) {
      const std::int64_t n = w.n_lo + static_cast<std::int64_t>(idx);
      const double cov = mu[kPlainHeader + idx] - mu[kDensity0] * mu[kDensityT];
      weighted += static_cast<double>(std::abs(w.k - n)) * cov;
      first += static_cast<double>(n) * cov;
      o[6 + idx] = cov;
    }
    o[0] = var_j;
    o[1] = weighted;
    o[2] = var_j - weighted;
    o[3] = first;
    o[4] = Ld * (mu[kDensityProduct] - mu[kDensity0] * mu[kDensityT]);
    o[5] = mu[kMeanJ];
    return o;
  };
  const JackknifeResult jk = jackknife(sums, stat);

  PlainEstimates e;
  e.k = w.k;
  e.n_lo = w.n_lo;
  e.var_j = jk.estimate[0];
  e.se_var_j = jk.se[0];
  e.weighted_sum = jk.estimate[1];
  e.se_weighted_sum = jk.se[1];
  e.se_var_minus_weighted = jk.se[2];
  e.first_moment = jk.estimate[3];
  e.se_first_moment = jk.se[3];
  e.sum_rule = jk.estimate[4];
  e.se_sum_rule = jk.se[4];
  e.mean_j = jk.estimate[5];
  e.se_mean_j = jk.se[5];
  e.cov.assign(jk.estimate.begin() + 6, jk.estimate.end());
  e.se_cov.assign(jk.se.begin() + 6, jk.se.end());
  e.replicates = sums.count();
  return e;
}

CoupledEstimates estimate_coupled(const Marginal& m, double V, double t, std::size_t L, const EnsembleSettings& ens,
                                  std::optional<std::size_t> window) {
  const Window w = make_window(m, V, t, L, window);
  const HatMarginal hat = hat_marginal(m);
  const std::size_t dim = kCoupledHeader + w.width;
  auto observe = [&](const CoupledConfig& c, std::vector<double>& out) {
    if (!c.q) throw InvariantViolation("estimate_coupled: second class particle lost");
    const std::int64_t q = *c.q;
    out[kQ] = static_cast<double>(q);
    out[kAbsQ] = static_cast<double>(std::abs(q - w.k));
    const std::int64_t idx = q - w.n_lo;
    if (idx >= 0 && idx < static_cast<std::int64_t>(w.width)) out[kCoupledHeader + static_cast<std::size_t>(idx)] = 1.0;
  };
  const BatchSums sums = run_coupled_ensemble(m, hat, L, t, ens, dim, observe);
  const JackknifeResult jk = jackknife(sums, [](const std::vector<double>& mu) { return mu; });

  CoupledEstimates e;
  e.k = w.k;
  e.n_lo = w.n_lo;
  e.mean_q = jk.estimate[kQ];
  e.se_mean_q = jk.se[kQ];
  e.mean_abs = jk.estimate[kAbsQ];
  e.se_mean_abs = jk.se[kAbsQ];
  e.prob.assign(jk.estimate.begin() + kCoupledHeader, jk.estimate.end());
  e.se_prob.assign(jk.se.begin() + kCoupledHeader, jk.se.end());
  e.replicates = sums.count();
  return e;
}

IdentityReport report_flux_variance(const PlainEstimates& e) {
  IdentityReport r = statistical_report("flux-variance", e.var_j, e.weighted_sum, e.se_var_j, e.se_weighted_sum,
                                        e.se_var_minus_weighted);
  r.replicates = e.replicates;
  return r;
}

IdentityReport report_covariance_moment(const PlainEstimates& e, const EquilibriumStats& st, double t) {
  IdentityReport r = statistical_report("covariance-moment", e.first_moment, t * st.flux_cov, e.se_first_moment, 0.0);
  r.replicates = e.replicates;
  return r;
}

IdentityReport report_sum_rule(const PlainEstimates& e, const EquilibriumStats& st) {
  IdentityReport r = statistical_report("sum-rule", e.sum_rule, st.var_omega, e.se_sum_rule, 0.0);
  r.replicates = e.replicates;
  return r;
}

IdentityReport report_nonnegativity(const PlainEstimates& e, double threshold) {
  double worst = std::numeric_limits<double>::infinity();
  std::int64_t at = e.n_lo;
  for (std::size_t i = 0; i < e.cov.size(); ++i) {
    double z;
    if (e.se_cov[i] > 0.0)
      z = e.cov[i] / e.se_cov[i];
    else
      z = e.cov[i] >= 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    if (z < worst) {
      worst = z;
      at = e.n_lo + static_cast<std::int64_t>(i);
    }
  }
  IdentityReport r;
  r.identity = "nonnegativity";
  r.kind = "statistical";
  const std::size_t i = static_cast<std::size_t>(at - e.n_lo);
  r.lhs = e.cov.empty() ? 0.0 : e.cov[i];
  r.se_lhs = e.cov.empty() ? 0.0 : e.se_cov[i];
  r.z = e.cov.empty() ? 0.0 : worst;
  r.threshold = -threshold;
  r.pass = e.cov.empty() || worst >= -threshold;
  r.replicates = e.replicates;
  std::ostringstream os;
  os << "smallest Cov/SE over " << e.cov.size() << " offsets, at n = " << at;
  r.note = os.str();
  return r;
}

IdentityReport report_second_class_law(const PlainEstimates& p, const CoupledEstimates& c, const EquilibriumStats& st) {
  if (p.n_lo != c.n_lo || p.cov.size() != c.prob.size())
    throw DomainError("report_second_class_law: plain and coupled windows differ");
  const double threshold = two_sided_critical(sidak_level(family_alpha(), p.cov.size()));
  double worst = 0.0;
  std::size_t at = 0;
  for (std::size_t i = 0; i < p.cov.size(); ++i) {
    const double z = z_score(p.cov[i], st.var_omega * c.prob[i], p.se_cov[i], st.var_omega * c.se_prob[i]);
    if (z > worst) {
      worst = z;
      at = i;
    }
  }
  IdentityReport r;
  r.identity = "second-class-law";
  r.kind = "statistical";
  if (!p.cov.empty()) {
    r.lhs = p.cov[at];
    r.rhs = st.var_omega * c.prob[at];
    r.se_lhs = p.se_cov[at];
    r.se_rhs = st.var_omega * c.se_prob[at];
  }
  r.z = worst;
  r.threshold = threshold;
  r.pass = worst <= threshold;
  r.replicates = p.replicates + c.replicates;
  std::ostringstream os;
  os << "max site z over " << p.cov.size() << " offsets, at n = " << p.n_lo + static_cast<std::int64_t>(at);
  r.note = os.str();
  return r;
}

IdentityReport report_flux_variance_abs_q(const PlainEstimates& p, const CoupledEstimates& c,
                                          const EquilibriumStats& st) {
  if (p.k != c.k) throw DomainError("report_flux_variance_abs_q: observer index differs between ensembles");
  IdentityReport r = statistical_report("flux-variance-abs-q", p.var_j, st.var_omega * c.mean_abs, p.se_var_j,
                                        st.var_omega * c.se_mean_abs);
  r.replicates = p.replicates + c.replicates;
  return r;
}

IdentityReport report_second_class_drift(const CoupledEstimates& c, const EquilibriumStats& st, double t) {
  IdentityReport r = statistical_report("second-class-drift", c.mean_q, t * st.char_speed, c.se_mean_q, 0.0);
  r.replicates = c.replicates;
  return r;
}

namespace {

void stamp(IdentityReport& r, const Marginal& m, double V, double t, std::size_t L, const EnsembleSettings& ens,
           double runtime) {
  r.model = m.spec().name();
  r.params = m.spec().params();
  r.params["theta"] = m.theta();
  r.params["V"] = V;
  r.params["t"] = t;
  r.params["L"] = static_cast<double>(L);
  r.seed = ens.seed;
  r.runtime_seconds = runtime;
}

}  // namespace

IdentityReport check_flux_variance(const Marginal& m, double V, double t, std::size_t L, const EnsembleSettings& ens,
                                 std::optional<std::size_t> window) {
  const auto start = std::chrono::steady_clock::now();
  IdentityReport r = report_flux_variance(estimate_plain(m, V, t, L, ens, window));
  stamp(r, m, V, t, L, ens, elapsed(start));
  return r;
}

IdentityReport check_covariance_moment(const Marginal& m, double t, std::size_t L, const EnsembleSettings& ens,
                                 std::optional<std::size_t> window) {
  const auto start = std::chrono::steady_clock::now();
  IdentityReport r = report_covariance_moment(estimate_plain(m, 0.0, t, L, ens, window), equilibrium_stats(m), t);
  stamp(r, m, 0.0, t, L, ens, elapsed(start));
  return r;
}

std::vector<IdentityReport> check_second_class_identities(const Marginal& m, double V, double t, std::size_t L,
                                                    const EnsembleSettings& ens,
                                                    std::optional<std::size_t> window) {
  const auto start = std::chrono::steady_clock::now();
  const EquilibriumStats st = equilibrium_stats(m);
  const PlainEstimates p = estimate_plain(m, V, t, L, ens, window);
  EnsembleSettings cens = ens;
  cens.seed = coupled_seed(ens.seed);
  const CoupledEstimates c = estimate_coupled(m, V, t, L, cens, window);
  const double runtime = elapsed(start);
  std::vector<IdentityReport> out{report_second_class_law(p, c, st), report_flux_variance_abs_q(p, c, st),
                                  report_second_class_drift(c, st, t)};
  for (auto& r : out) stamp(r, m, V, t, L, ens, runtime);
  return out;
}

}  // namespace depflux
