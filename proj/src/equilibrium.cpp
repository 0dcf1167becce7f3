#include "depflux/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <sstream>

#include "depflux/error.hpp"

namespace depflux {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::size_t kMaxSupport = 1'000'000;

double log_add(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

/// log(r / (1 - r)) for r = exp(d), d < 0.
double log_geometric_tail(double d) { return d - std::log(-std::expm1(d)); }

void require_in_space(const RateSpec& spec, int z, const char* op) {
  if (!spec.space().contains(z)) {
    std::ostringstream os;
    os << op << ": z = " << z << " is outside the single-site space of " << spec.name();
    throw DomainError(os.str());
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// SiteDistribution

SiteDistribution::SiteDistribution(int z_lo, std::vector<double> probs)
    : z_lo_(z_lo), probs_(std::move(probs)), cdf_(probs_.size()) {
  if (probs_.empty()) throw DomainError("SiteDistribution: empty support");
  std::partial_sum(probs_.begin(), probs_.end(), cdf_.begin());
  // Pin the top of the CDF to 1 from the last positive atom on, so rounding
  // never selects a trailing zero-probability value.
  std::size_t last = probs_.size() - 1;
  while (last > 0 && probs_[last] == 0.0) --last;
  std::fill(cdf_.begin() + static_cast<std::ptrdiff_t>(last), cdf_.end(), 1.0);
}

double SiteDistribution::prob(int z) const noexcept {
  if (z < z_lo() || z > z_hi()) return 0.0;
  return probs_[static_cast<std::size_t>(z - z_lo_)];
}

double SiteDistribution::mean() const {
  double m = 0.0;
  for (std::size_t i = 0; i < probs_.size(); ++i) m += probs_[i] * (z_lo_ + static_cast<int>(i));
  return m;
}

double SiteDistribution::variance() const {
  const double m = mean();
  double v = 0.0;
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    const double d = z_lo_ + static_cast<int>(i) - m;
    v += probs_[i] * d * d;
  }
  return v;
}

int SiteDistribution::sample(Stream& rng) const {
  const double u = uniform01(rng);
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  const auto idx = std::min<std::ptrdiff_t>(it - cdf_.begin(), static_cast<std::ptrdiff_t>(cdf_.size()) - 1);
  return z_lo_ + static_cast<int>(idx);
}

// ---------------------------------------------------------------------------
// Marginal

Marginal::Marginal(RateSpec spec, double theta, int z_lo, std::vector<double> probs, double log_Z,
                   double truncation_mass)
    : SiteDistribution(z_lo, std::move(probs)),
      spec_(std::move(spec)),
      theta_(theta),
      log_Z_(log_Z),
      truncation_mass_(truncation_mass) {}

double Marginal::Z() const noexcept { return std::exp(log_Z_); }

// ---------------------------------------------------------------------------
// f-factorial and theta range

double f_factorial(const RateSpec& spec, int z) {
  require_in_space(spec, z, "f_factorial");
  double out = 1.0;
  if (z > 0) {
    for (int y = 1; y <= z; ++y) out *= spec.f(y);
  } else if (z < 0) {
    for (int y = z + 1; y <= 0; ++y) out *= spec.f(y);
    out = 1.0 / out;
  }
  return out;
}

double log_f_factorial(const RateSpec& spec, int z) {
  require_in_space(spec, z, "log_f_factorial");
  double out = 0.0;
  if (z > 0) {
    for (int y = 1; y <= z; ++y) out += std::log(spec.f(y));
  } else if (z < 0) {
    for (int y = z + 1; y <= 0; ++y) out -= std::log(spec.f(y));
  }
  return out;
}

ThetaBounds theta_bounds(const RateSpec& spec, int horizon) {
  if (horizon < 1) throw DomainError("theta_bounds: horizon must be positive");
  const auto& sp = spec.space();
  ThetaBounds b{-kInf, kInf, true, true, horizon, kNaN, kNaN, kNaN, kNaN};
  if (!sp.omega_max) {
    b.horizon_log_f_hi = std::log(spec.f(horizon));
    b.horizon_root_factorial_hi = log_f_factorial(spec, horizon) / horizon;
    if (spec.theta_hi_exact()) {
      b.hi = *spec.theta_hi_exact();
    } else {
      b.hi = b.horizon_log_f_hi;
      b.hi_exact = false;
    }
  }
  if (!sp.omega_min) {
    b.horizon_log_f_lo = std::log(spec.f(-horizon));
    b.horizon_root_factorial_lo = -log_f_factorial(spec, -horizon) / horizon;
    if (spec.theta_lo_exact()) {
      b.lo = *spec.theta_lo_exact();
    } else {
      b.lo = b.horizon_log_f_lo;
      b.lo_exact = false;
    }
  }
  if (!(b.hi > b.lo)) {
    std::ostringstream os;
    os << spec.name() << ": degenerate theta range [" << b.lo << ", " << b.hi << "]";
    throw ModelError(os.str());
  }
  return b;
}

namespace {

void require_admissible_theta(const ThetaBounds& b, double theta) {
  constexpr double kMargin = 0.1;  // distance kept from estimated (non-closed-form) limits
  const bool ok_lo = b.lo_exact ? theta > b.lo : theta >= b.lo + kMargin;
  const bool ok_hi = b.hi_exact ? theta < b.hi : theta <= b.hi - kMargin;
  if (!std::isfinite(theta) || !ok_lo || !ok_hi) {
    std::ostringstream os;
    os << "theta = " << theta << " outside the admissible range (" << b.lo << ", " << b.hi << ")";
    throw DomainError(os.str());
  }
}

}  // namespace

Marginal build_marginal(const RateSpec& spec, double theta, double eps) {
  if (!(eps > 0.0 && eps <= 1e-6)) throw DomainError("build_marginal: eps must lie in (0, 1e-6]");
  const ThetaBounds bounds = theta_bounds(spec, 200);
  require_admissible_theta(bounds, theta);
  const auto& sp = spec.space();

  if (sp.bounded()) {
    const int lo = *sp.omega_min, hi = *sp.omega_max;
    std::vector<double> lw(static_cast<std::size_t>(hi - lo + 1));
    for (int z = lo; z <= hi; ++z) lw[static_cast<std::size_t>(z - lo)] = theta * z - log_f_factorial(spec, z);
    const double top = *std::max_element(lw.begin(), lw.end());
    std::vector<double> probs(lw.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < lw.size(); ++i) sum += probs[i] = std::exp(lw[i] - top);
    for (auto& x : probs) x /= sum;
    return Marginal(spec, theta, lo, std::move(probs), top + std::log(sum), 0.0);
  }

  // Unbounded: log weights lw(z) = theta z - log f(z)! are concave in z
  // (f nondecreasing), so once a side decays its tail is dominated by a
  // geometric series with the boundary ratio.
  std::deque<double> lw{0.0};  // lw(0) = 0 since f(0)! = 1
  int lo = 0, hi = 0;
  double log_z = 0.0;
  auto log_f = [&](int z) {
    const double fz = spec.f(z);
    if (!(fz > 0.0)) {
      std::ostringstream os;
      os << spec.name() << ": f(" << z << ") = " << fz << " must be positive above omega_min";
      throw ModelError(os.str());
    }
    return std::log(fz);
  };
  auto right_tail = [&]() {
    if (sp.omega_max && hi == *sp.omega_max) return -kInf;
    const double d = theta - log_f(hi + 1);
    return d < 0.0 ? lw.back() + log_geometric_tail(d) : kInf;
  };
  auto left_tail = [&]() {
    if (sp.omega_min && lo == *sp.omega_min) return -kInf;
    const double d = log_f(lo) - theta;
    return d < 0.0 ? lw.front() + log_geometric_tail(d) : kInf;
  };
  const double log_eps = std::log(eps);
  double tr = right_tail(), tl = left_tail();
  while (log_add(tr, tl) > log_eps + log_z) {
    if (lw.size() >= kMaxSupport)
      throw ConvergenceError("build_marginal: tail did not decay within the support cap");
    if (tr >= tl) {
      lw.push_back(lw.back() + theta - log_f(hi + 1));
      ++hi;
      log_z = log_add(log_z, lw.back());
      tr = right_tail();
    } else {
      lw.push_front(lw.front() - theta + log_f(lo));
      --lo;
      log_z = log_add(log_z, lw.front());
      tl = left_tail();
    }
  }
  std::vector<double> probs(lw.size());
  for (std::size_t i = 0; i < lw.size(); ++i) probs[i] = std::exp(lw[i] - log_z);
  const double sum = std::accumulate(probs.begin(), probs.end(), 0.0);
  for (auto& x : probs) x /= sum;
  return Marginal(spec, theta, lo, std::move(probs), log_z, std::exp(log_add(tr, tl) - log_z));
}

double mean_f(const Marginal& m) {
  double out = 0.0;
  for (int z = m.z_lo(); z <= m.z_hi(); ++z) out += m.spec().f(z) * m.prob(z);
  return out;
}

EquilibriumStats equilibrium_stats(const Marginal& m) {
  EquilibriumStats st;
  st.rho = m.mean();
  st.var_omega = m.variance();
  if (!(st.var_omega > 0.0)) throw DomainError("equilibrium_stats: degenerate marginal (zero variance)");
  const auto& spec = m.spec();
  for (int y = m.z_lo(); y <= m.z_hi(); ++y) {
    const double my = m.prob(y);
    if (my == 0.0) continue;
    for (int z = m.z_lo(); z <= m.z_hi(); ++z) {
      const double w = my * m.prob(z);
      if (w == 0.0) continue;
      const double r = spec.r(y, z);
      st.hydro_flux += w * r;
      st.flux_cov += w * r * (y + z - 2.0 * st.rho);
      st.mean_s += w * spec.s(y, z);
    }
  }
  st.char_speed = st.flux_cov / st.var_omega;
  return st;
}

double g_fn(const EquilibriumStats& stats, int z) { return z - stats.rho; }

namespace {

/// T(y) = sum_{z > y} g(z) mu(z) over the support, evaluated from whichever
/// end avoids cancellation.
std::vector<double> upper_g_sums(const SiteDistribution& m, double rho) {
  const std::size_t n = m.probs().size();
  std::vector<double> top(n, 0.0), bottom(n, 0.0);
  double acc = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    top[i] = acc;
    acc += (m.z_lo() + static_cast<int>(i) - rho) * m.probs()[i];
  }
  acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += (m.z_lo() + static_cast<int>(i) - rho) * m.probs()[i];
    bottom[i] = -acc;
  }
  for (std::size_t i = 0; i < n; ++i)
    if (m.z_lo() + static_cast<int>(i) < rho) top[i] = bottom[i];
  return top;
}

}  // namespace

double f_fn(const Marginal& m, int y) {
  const double my = m.prob(y);
  if (!(my > 0.0)) {
    std::ostringstream os;
    os << "f_fn: mu(" << y << ") = 0";
    throw DomainError(os.str());
  }
  const auto T = upper_g_sums(m, m.mean());
  return T[static_cast<std::size_t>(y - m.z_lo())] / my;
}

HatMarginal hat_marginal(const Marginal& m) {
  const double var = m.variance();
  if (!(var > 0.0)) throw DomainError("hat_marginal: zero variance");
  auto T = upper_g_sums(m, m.mean());
  double sum = 0.0;
  for (std::size_t i = 0; i < T.size(); ++i) {
    double v = T[i] / var;
    if (v < -1e-14) {
      std::ostringstream os;
      os << "hat_marginal: negative weight " << v << " at z = " << m.z_lo() + static_cast<int>(i)
         << " (rates not attractive?)";
      throw ModelError(os.str());
    }
    T[i] = std::max(v, 0.0);
    sum += T[i];
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    std::ostringstream os;
    os << "hat_marginal: weights sum to " << sum;
    throw InvariantViolation(os.str());
  }
  for (auto& x : T) x /= sum;
  return HatMarginal(m.z_lo(), std::move(T));
}

double solve_theta_for_rho(const RateSpec& spec, double rho, double eps, double tol) {
  const ThetaBounds b = theta_bounds(spec, 200);
  const auto& sp = spec.space();
  if (!std::isfinite(rho) || (sp.omega_min && rho <= *sp.omega_min) || (sp.omega_max && rho >= *sp.omega_max))
    throw DomainError("solve_theta_for_rho: density outside the open range of the state space");
  auto rho_at = [&](double th) { return build_marginal(spec, th, eps).mean(); };

  // Bracket [a, c] with rho(a) <= target <= rho(c).
  auto bracket_side = [&](bool upper) {
    const double limit = upper ? b.hi : b.lo;
    const bool exact = upper ? b.hi_exact : b.lo_exact;
    const double sign = upper ? 1.0 : -1.0;
    if (std::isinf(limit)) {
      double th = sign;
      for (int k = 0; k < 64; ++k, th *= 2.0)
        if (upper ? rho_at(th) >= rho : rho_at(th) <= rho) return th;
    } else {
      const double margin = exact ? 0.0 : 0.1;
      double gap = 1.0;
      for (int k = 0; k < 60; ++k, gap /= 2.0) {
        const double th = limit - sign * (margin + gap);
        if (upper ? rho_at(th) >= rho : rho_at(th) <= rho) return th;
      }
    }
    throw DomainError("solve_theta_for_rho: density not attainable within the theta range");
  };
  double a = bracket_side(false), c = bracket_side(true);
  for (int k = 0; k < 200 && c - a > 1e-15 * (1.0 + std::abs(a)); ++k) {
    const double mid = 0.5 * (a + c);
    (rho_at(mid) < rho ? a : c) = mid;
  }
  double th = 0.5 * (a + c);
  // Newton polish: d rho / d theta = Var(omega_0).
  for (int k = 0; k < 3; ++k) {
    const Marginal m = build_marginal(spec, th, eps);
    const double next = th - (m.mean() - rho) / m.variance();
    if (!(next > a - 1e-9 && next < c + 1e-9)) break;
    th = next;
  }
  if (std::abs(rho_at(th) - rho) > tol)
    throw ConvergenceError("solve_theta_for_rho: tolerance not reached");
  return th;
}

int sample_site(const SiteDistribution& dist, Stream& rng) { return dist.sample(rng); }

std::vector<int> sample_ring(const SiteDistribution& dist, std::size_t L, Stream& rng) {
  if (L < 2) throw DomainError("sample_ring: L must be at least 2");
  std::vector<int> out(L);
  for (auto& x : out) x = dist.sample(rng);
  return out;
}

}  // namespace depflux
