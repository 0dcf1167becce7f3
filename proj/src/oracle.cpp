#include "depflux/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "depflux/coupling.hpp"
#include "depflux/error.hpp"
#include "depflux/rng.hpp"

namespace depflux {

// ---------------------------------------------------------------------------
// StateIndex

StateIndex::StateIndex(IntInterval alphabet, std::size_t L, std::size_t cap) : alphabet_(alphabet), L_(L) {
  if (alphabet_.empty()) throw DomainError("StateIndex: empty alphabet");
  if (L_ < 2) throw DomainError("StateIndex: ring needs at least 2 sites");
  base_ = static_cast<std::size_t>(alphabet_.size());
  stride_.resize(L_);
  std::size_t s = 1;
  for (std::size_t i = 0; i < L_; ++i) {
    stride_[i] = s;
    if (s > cap / base_ + 1) {
      std::ostringstream os;
      os << "StateIndex: " << base_ << "^" << L_ << " states exceed the cap of " << cap;
      throw DomainError(os.str());
    }
    s *= base_;
  }
  size_ = s;
  if (size_ > cap) {
    std::ostringstream os;
    os << "StateIndex: " << size_ << " states exceed the cap of " << cap;
    throw DomainError(os.str());
  }
}

std::size_t StateIndex::rank(const std::vector<int>& config) const {
  if (config.size() != L_) throw DomainError("StateIndex::rank: wrong configuration length");
  std::size_t k = 0;
  for (std::size_t i = 0; i < L_; ++i) {
    if (!alphabet_.contains(config[i])) throw DomainError("StateIndex::rank: site value outside the alphabet");
    k += static_cast<std::size_t>(config[i] - alphabet_.lo) * stride_[i];
  }
  return k;
}

std::vector<int> StateIndex::unrank(std::size_t k) const {
  if (k >= size_) throw DomainError("StateIndex::unrank: index out of range");
  std::vector<int> out(L_);
  for (std::size_t i = 0; i < L_; ++i) out[i] = site(k, i);
  return out;
}

// ---------------------------------------------------------------------------
// Generator

std::vector<double> Generator::apply_right(const std::vector<double>& v) const {
  std::vector<double> out(n);
  for (std::size_t x = 0; x < n; ++x) {
    double acc = diag[x] * v[x];
    for (std::size_t k = row_ptr[x]; k < row_ptr[x + 1]; ++k) acc += val[k] * v[col[k]];
    out[x] = acc;
  }
  return out;
}

std::vector<double> Generator::apply_left(const std::vector<double>& v) const {
  std::vector<double> out(n, 0.0);
  for (std::size_t x = 0; x < n; ++x) {
    const double vx = v[x];
    if (vx == 0.0) continue;
    out[x] += diag[x] * vx;
    for (std::size_t k = row_ptr[x]; k < row_ptr[x + 1]; ++k) out[col[k]] += val[k] * vx;
  }
  return out;
}

double Generator::row_sum_error() const {
  double worst = 0.0;
  for (std::size_t x = 0; x < n; ++x) {
    double acc = diag[x];
    for (std::size_t k = row_ptr[x]; k < row_ptr[x + 1]; ++k) acc += val[k];
    worst = std::max(worst, std::abs(acc));
  }
  return worst;
}

double Generator::min_off_diagonal() const {
  if (val.empty()) return 0.0;
  return *std::min_element(val.begin(), val.end());
}

double Generator::max_exit_rate() const {
  double m = 0.0;
  for (double d : diag) m = std::max(m, -d);
  return m;
}

std::vector<std::vector<double>> Generator::dense() const {
  std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
  for (std::size_t x = 0; x < n; ++x) {
    m[x][x] += diag[x];
    for (std::size_t k = row_ptr[x]; k < row_ptr[x + 1]; ++k) m[x][col[k]] += val[k];
  }
  return m;
}

namespace {

/// Row-by-row CSR assembly; rows must be finished in increasing order.
class GeneratorBuilder {
 public:
  explicit GeneratorBuilder(std::size_t n) {
    g_.n = n;
    g_.row_ptr.reserve(n + 1);
    g_.row_ptr.push_back(0);
    g_.diag.assign(n, 0.0);
  }
  void add(std::size_t from, std::size_t to, double rate) {
    if (rate <= 0.0) return;
    g_.col.push_back(to);
    g_.val.push_back(rate);
    g_.diag[from] -= rate;
  }
  void end_row() { g_.row_ptr.push_back(g_.col.size()); }
  void suppress() { ++g_.suppressed; }
  Generator finish() && { return std::move(g_); }

 private:
  Generator g_;
};

/// mu restricted to the alphabet and renormalized.
SiteDistribution alphabet_marginal(const Marginal& m, IntInterval alphabet) {
  std::vector<double> probs;
  double total = 0.0;
  for (int z = alphabet.lo; z <= alphabet.hi; ++z) {
    probs.push_back(m.prob(z));
    total += probs.back();
  }
  if (!(total > 0.0)) throw DomainError("oracle: alphabet carries no equilibrium mass");
  for (double& p : probs) p /= total;
  return SiteDistribution(alphabet.lo, std::move(probs));
}

double poisson_log_weight(double lt, std::size_t k) {
  return -lt + static_cast<double>(k) * std::log(lt) - std::lgamma(static_cast<double>(k) + 1.0);
}

template <class Step>
std::vector<double> uniformize(const Generator& g, const std::vector<double>& v, double t, double tol, double norm,
                               Step step) {
  if (v.size() != g.n) throw DomainError("semigroup: vector length does not match the generator");
  if (t < 0.0) throw DomainError("semigroup: negative time");
  const double lambda = g.max_exit_rate();
  if (t == 0.0 || lambda == 0.0 || norm == 0.0) return v;
  const double lt = lambda * t;
  const std::size_t cap = uniformization_term_cap(lt);
  std::vector<double> term = v;
  std::vector<double> out(g.n, 0.0);
  double cumulative = 0.0;
  for (std::size_t k = 0;; ++k) {
    const double w = std::exp(poisson_log_weight(lt, k));
    cumulative += w;
    if (w > 0.0)
      for (std::size_t x = 0; x < g.n; ++x) out[x] += w * term[x];
    if (static_cast<double>(k) >= lt && (1.0 - cumulative) * norm <= tol * std::max(1.0, norm)) break;
    if (k + 1 > cap) {
      std::ostringstream os;
      os << "semigroup: uniformization did not reach tolerance " << tol << " within " << cap << " terms";
      throw ConvergenceError(os.str());
    }
    const std::vector<double> gv = step(term);
    for (std::size_t x = 0; x < g.n; ++x) term[x] += gv[x] / lambda;
  }
  return out;
}

Marginal oracle_marginal(const RateSpec& spec, double theta) {
  return build_marginal(spec, theta, kDefaultTruncation);
}

}  // namespace

IntInterval oracle_alphabet(const RateSpec& spec, const OracleOptions& opts) {
  const auto& sp = spec.space();
  if (sp.bounded()) return {*sp.omega_min, *sp.omega_max};
  if (!opts.truncation)
    throw DomainError("oracle: unbounded I requires an explicit truncation alphabet (truncated dynamics)");
  const IntInterval a = *opts.truncation;
  if (a.empty() || !sp.contains(a.lo) || !sp.contains(a.hi))
    throw DomainError("oracle: truncation alphabet must be a nonempty subset of I");
  return a;
}

Generator build_generator(const RateSpec& spec, const StateIndex& index, Orientation orientation) {
  const std::size_t L = index.sites();
  const IntInterval a = index.alphabet();
  GeneratorBuilder b(index.size());
  // Offsets applied to (omega_i, omega_j) by the p-move and the q-move.
  const int p_shift = orientation == Orientation::forward ? -1 : 1;
  const int q_shift = -p_shift;
  auto push = [&](std::size_t k, std::size_t i, std::size_t j, int y, int z, int di, double rate) {
    if (rate <= 0.0) return;
    if (!a.contains(y + di) || !a.contains(z - di)) {
      if (!spec.space().contains(y + di) || !spec.space().contains(z - di))
        throw ModelError("build_generator: positive rate on a move leaving I (boundary condition broken)");
      b.suppress();
      return;
    }
    b.add(k, index.shift(index.shift(k, i, di), j, -di), rate);
  };
  for (std::size_t k = 0; k < index.size(); ++k) {
    for (std::size_t i = 0; i < L; ++i) {
      const std::size_t j = i + 1 == L ? 0 : i + 1;
      const int y = index.site(k, i);
      const int z = index.site(k, j);
      push(k, i, j, y, z, p_shift, spec.p(y, z));
      push(k, i, j, y, z, q_shift, spec.q(y, z));
    }
    b.end_row();
  }
  return std::move(b).finish();
}

Generator build_generator(const RateSpec& spec, std::size_t L, const OracleOptions& opts) {
  return build_generator(spec, StateIndex(oracle_alphabet(spec, opts), L, opts.state_cap), Orientation::forward);
}

Generator build_reversed_generator(const RateSpec& spec, std::size_t L, const OracleOptions& opts) {
  return build_generator(spec.reversed(), StateIndex(oracle_alphabet(spec, opts), L, opts.state_cap),
                         Orientation::reversed_time);
}

std::size_t uniformization_term_cap(double lt) {
  return static_cast<std::size_t>(std::ceil(lt + 40.0 * std::sqrt(lt + 1.0) + 50.0));
}

std::vector<double> semigroup_right(const Generator& g, const std::vector<double>& v, double t, double tol) {
  double norm = 0.0;
  for (double x : v) norm = std::max(norm, std::abs(x));
  return uniformize(g, v, t, tol, norm, [&g](const std::vector<double>& w) { return g.apply_right(w); });
}

std::vector<double> semigroup_left(const Generator& g, const std::vector<double>& v, double t, double tol) {
  double norm = 0.0;
  for (double x : v) norm += std::abs(x);
  return uniformize(g, v, t, tol, norm, [&g](const std::vector<double>& w) { return g.apply_left(w); });
}

std::vector<double> product_measure(const SiteDistribution& m, const StateIndex& index) {
  std::vector<double> pi(index.size());
  for (std::size_t k = 0; k < index.size(); ++k) {
    double w = 1.0;
    for (std::size_t i = 0; i < index.sites(); ++i) w *= m.prob(index.site(k, i));
    pi[k] = w;
  }
  return pi;
}

double stationarity_residual(const RateSpec& spec, double theta, std::size_t L, const OracleOptions& opts) {
  const IntInterval a = oracle_alphabet(spec, opts);
  const StateIndex index(a, L, opts.state_cap);
  const Generator g = build_generator(spec, index);
  const SiteDistribution mu = alphabet_marginal(oracle_marginal(spec, theta), a);
  const std::vector<double> flow = g.apply_left(product_measure(mu, index));
  double worst = 0.0;
  for (double x : flow) worst = std::max(worst, std::abs(x));
  return worst;
}

double adjoint_residual(const RateSpec& spec, double theta, std::size_t L, std::size_t trials, std::uint64_t seed,
                        const OracleOptions& opts) {
  const IntInterval a = oracle_alphabet(spec, opts);
  const StateIndex index(a, L, opts.state_cap);
  const Generator g = build_generator(spec, index);
  const Generator gs = build_generator(spec.reversed(), index, Orientation::reversed_time);
  const std::vector<double> pi = product_measure(alphabet_marginal(oracle_marginal(spec, theta), a), index);
  Stream rng = make_stream(seed, 0);
  const auto base = static_cast<std::size_t>(a.size());

  // A cylinder function: random table over a random window of consecutive sites.
  auto random_cylinder = [&]() {
    const std::size_t width = 1 + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(L));
    const std::size_t start = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(L));
    std::size_t cells = 1;
    for (std::size_t w = 0; w < std::min(width, L); ++w) cells *= base;
    std::vector<double> table(cells);
    for (double& v : table) v = 2.0 * uniform01(rng) - 1.0;
    std::vector<double> f(index.size());
    for (std::size_t k = 0; k < index.size(); ++k) {
      std::size_t cell = 0;
      for (std::size_t w = 0; w < std::min(width, L); ++w)
        cell = cell * base + static_cast<std::size_t>(index.site(k, (start + w) % L) - a.lo);
      f[k] = table[cell];
    }
    return f;
  };

  double worst = 0.0;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const std::vector<double> psi = random_cylinder();
    const std::vector<double> phi = random_cylinder();
    const std::vector<double> l_phi = g.apply_right(phi);
    const std::vector<double> ls_psi = gs.apply_right(psi);
    double lhs = 0.0;
    double rhs = 0.0;
    for (std::size_t k = 0; k < index.size(); ++k) {
      lhs += pi[k] * psi[k] * l_phi[k];
      rhs += pi[k] * phi[k] * ls_psi[k];
    }
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return worst;
}

double reversed_flux_residual(const Marginal& m) {
  const RateSpec& spec = m.spec();
  double lhs = 0.0;
  double mean_s = 0.0;
  for (int y = m.z_lo(); y <= m.z_hi(); ++y) {
    const double my = m.prob(y);
    for (int z = m.z_lo(); z <= m.z_hi(); ++z) {
      const double w = my * m.prob(z);
      lhs += w * spec.r(z, y) * static_cast<double>(y - z);
      mean_s += w * spec.s(y, z);
    }
  }
  return std::abs(lhs + mean_s);
}

PairIdentityResiduals pair_identity_residuals(const Marginal& m, const std::function<double(int, int)>& G) {
  const RateSpec& spec = m.spec();
  const IntInterval sup = m.support();
  auto g = [&](int y, int z) { return sup.contains(y) && sup.contains(z) ? G(y, z) : 0.0; };
  double dep_l = 0.0, dep_r = 0.0, rem_l = 0.0, rem_r = 0.0;
  for (int y = sup.lo; y <= sup.hi; ++y)
    for (int z = sup.lo; z <= sup.hi; ++z) {
      const double w = m.prob(y) * m.prob(z);
      const double p = spec.p(y, z);
      const double q = spec.q(y, z);
      if (p != 0.0) dep_l += p * g(y - 1, z + 1) * w;
      if (q != 0.0) rem_l += q * g(y + 1, z - 1) * w;
      const double gyz = g(y, z);
      dep_r += spec.p(z, y) * gyz * w;
      rem_r += spec.q(z, y) * gyz * w;
    }
  return {std::abs(dep_l - dep_r), std::abs(rem_l - rem_r)};
}

std::vector<double> two_point_profile(const RateSpec& spec, double theta, std::size_t L, double t,
                                      const OracleOptions& opts) {
  const IntInterval a = oracle_alphabet(spec, opts);
  const StateIndex index(a, L, opts.state_cap);
  const Generator g = build_generator(spec, index);
  const SiteDistribution mu = alphabet_marginal(oracle_marginal(spec, theta), a);
  const double rho = mu.mean();
  std::vector<double> start = product_measure(mu, index);
  for (std::size_t k = 0; k < index.size(); ++k) start[k] *= index.site(k, 0) - rho;
  const std::vector<double> evolved = semigroup_left(g, start, t, 1e-14);
  std::vector<double> cov(L, 0.0);
  for (std::size_t k = 0; k < index.size(); ++k)
    for (std::size_t n = 0; n < L; ++n) cov[n] += evolved[k] * (index.site(k, n) - rho);
  return cov;
}

double two_point_exact(const RateSpec& spec, double theta, std::size_t L, double t, std::size_t n,
                       const OracleOptions& opts) {
  if (n >= L) throw DomainError("two_point_exact: site index outside the ring");
  return two_point_profile(spec, theta, L, t, opts)[n];
}

std::vector<double> q_distribution_exact(const RateSpec& spec, double theta, std::size_t L, double t,
                                         const OracleOptions& opts) {
  const IntInterval a = oracle_alphabet(spec, opts);
  if (a.size() < 2) throw DomainError("q_distribution_exact: alphabet too small for a discrepancy");
  const StateIndex index(a, L, opts.state_cap);
  if (index.size() > opts.state_cap / L) throw DomainError("q_distribution_exact: coupled state count exceeds the cap");
  const std::size_t n = index.size() * L;
  auto id = [L](std::size_t k, std::size_t q) { return k * L + q; };

  GeneratorBuilder b(n);
  for (std::size_t k = 0; k < index.size(); ++k) {
    for (std::size_t qpos = 0; qpos < L; ++qpos) {
      const std::size_t from = id(k, qpos);
      if (index.site(k, qpos) >= a.hi) {
        b.end_row();
        continue;
      }
      for (std::size_t i = 0; i < L; ++i) {
        const std::size_t j = i + 1 == L ? 0 : i + 1;
        const int ei = index.site(k, i);
        const int ej = index.site(k, j);
        const int zi = ei + (qpos == i ? 1 : 0);
        const int zj = ej + (qpos == j ? 1 : 0);
        const CoupledRates r = coupled_edge_rates(spec, ei, ej, zi, zj);
        auto eta_move = [&](int di) -> std::optional<std::size_t> {
          if (!a.contains(ei + di) || !a.contains(ej - di)) return std::nullopt;
          return index.shift(index.shift(k, i, di), j, -di);
        };
        auto q_check = [&](int row, std::size_t must_be) {
          if (r[row] > 0.0 && qpos != must_be)
            throw InvariantViolation("q_distribution_exact: discrepancy row fired away from the discrepancy");
        };
        q_check(0, i);
        q_check(4, i);
        q_check(1, j);
        q_check(3, j);
        // Row 0 and row 3 move only zeta, hence only Q.
        b.add(from, id(k, j), r[0]);
        b.add(from, id(k, i), r[3]);
        if (auto kk = eta_move(-1)) {
          b.add(from, id(*kk, i), r[1]);
          b.add(from, id(*kk, qpos), r[2]);
        } else if (r[1] > 0.0 || r[2] > 0.0) {
          b.suppress();
        }
        if (auto kk = eta_move(1)) {
          b.add(from, id(*kk, j), r[4]);
          b.add(from, id(*kk, qpos), r[5]);
        } else if (r[4] > 0.0 || r[5] > 0.0) {
          b.suppress();
        }
      }
      b.end_row();
    }
  }
  const Generator g = std::move(b).finish();
  if (spec.space().bounded() && g.suppressed != 0)
    throw InvariantViolation("q_distribution_exact: coupled move left the alphabet");

  const Marginal m = oracle_marginal(spec, theta);
  const SiteDistribution mu = alphabet_marginal(m, a);
  const HatMarginal hat = hat_marginal(m);
  std::vector<double> start(n, 0.0);
  for (std::size_t k = 0; k < index.size(); ++k) {
    double w = hat.prob(index.site(k, 0));
    for (std::size_t i = 1; i < L && w != 0.0; ++i) w *= mu.prob(index.site(k, i));
    start[id(k, 0)] = w;
  }
  const std::vector<double> evolved = semigroup_left(g, start, t, 1e-14);
  std::vector<double> law(L, 0.0);
  for (std::size_t k = 0; k < index.size(); ++k)
    for (std::size_t qpos = 0; qpos < L; ++qpos) law[qpos] += evolved[id(k, qpos)];
  return law;
}

VarJQuadrature var_j_quadrature(const RateSpec& spec, double theta, std::size_t L, double t,
                                const OracleOptions& opts) {
  if (t < 0.0) throw DomainError("var_j_quadrature: negative time");
  const IntInterval a = oracle_alphabet(spec, opts);
  const StateIndex index(a, L, opts.state_cap);
  const Generator g = build_generator(spec, index);
  const SiteDistribution mu = alphabet_marginal(oracle_marginal(spec, theta), a);
  const std::vector<double> pi = product_measure(mu, index);

  double mean_r = 0.0, mean_rs = 0.0, mean_s = 0.0;
  for (int y = a.lo; y <= a.hi; ++y)
    for (int z = a.lo; z <= a.hi; ++z) {
      const double w = mu.prob(y) * mu.prob(z);
      mean_r += w * spec.r(y, z);
      mean_rs += w * spec.r(z, y);
      mean_s += w * spec.s(y, z);
    }
  std::vector<double> start(index.size());
  std::vector<double> r_tilde(index.size());
  for (std::size_t k = 0; k < index.size(); ++k) {
    const int y = index.site(k, 0);
    const int z = index.site(k, 1);
    start[k] = pi[k] * (spec.r(z, y) - mean_rs);
    r_tilde[k] = spec.r(y, z) - mean_r;
  }
  auto correlation = [&](double v) {
    const std::vector<double> evolved = semigroup_left(g, start, v, 1e-14);
    double c = 0.0;
    for (std::size_t k = 0; k < index.size(); ++k) c += evolved[k] * r_tilde[k];
    return c;
  };

  VarJQuadrature out;
  out.mean_s = mean_s;
  if (t == 0.0) return out;
  double err = 0.0;
  const double integral = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      [&](double v) { return (t - v) * correlation(v); }, 0.0, t, 15, 1e-12, &err);
  if (!(err <= 1e-8)) {
    std::ostringstream os;
    os << "var_j_quadrature: quadrature error estimate " << err << " above 1e-8";
    throw ConvergenceError(os.str());
  }
  out.value = t * mean_s + 2.0 * integral;
  out.error_estimate = 2.0 * err;
  return out;
}

double ring_weighted_two_point_sum(const std::vector<double>& profile) {
  const std::size_t L = profile.size();
  double acc = 0.0;
  for (std::size_t n = 0; n < L; ++n) acc += static_cast<double>(std::min(n, L - n)) * profile[n];
  return acc;
}

}  // namespace depflux
