#include "depflux/dynamics.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "depflux/error.hpp"

namespace depflux {

namespace {
constexpr std::uint64_t kCoherenceEvery = 1u << 16;
constexpr std::uint64_t kConservationEvery = 1'000'000;
}  // namespace

RingConfig::RingConfig(std::vector<int> sites)
    : omega(std::move(sites)), initial_omega(omega), growth(omega.size(), 0) {
  conserved_sum = current_sum();
}

std::int64_t RingConfig::current_sum() const {
  return std::accumulate(omega.begin(), omega.end(), std::int64_t{0});
}

RingProcess::RingProcess(RateCache& cache, RingConfig config)
    : cache_(&cache),
      config_(std::move(config)),
      dep_(config_.size(), 0.0),
      rem_(config_.size(), 0.0),
      tree_(config_.size()) {
  if (config_.size() < 2) throw DomainError("RingProcess: ring needs at least 2 sites");
  for (int w : config_.omega) cache_->ensure(w);
  for (std::size_t e = 0; e < config_.size(); ++e) {
    const int y = config_.omega[e];
    const int z = config_.omega[e + 1 == config_.size() ? 0 : e + 1];
    dep_[e] = cache_->p(y, z);
    rem_[e] = cache_->q(y, z);
  }
  for (std::size_t e = 0; e < config_.size(); ++e) tree_.set(e, dep_[e] + rem_[e]);
}

void RingProcess::refresh_edge(std::size_t e) {
  const std::size_t L = config_.size();
  const int y = config_.omega[e];
  const int z = config_.omega[e + 1 == L ? 0 : e + 1];
  dep_[e] = cache_->p(y, z);
  rem_[e] = cache_->q(y, z);
  tree_.set(e, dep_[e] + rem_[e]);
}

void RingProcess::apply(std::size_t e, bool deposition) {
  const std::size_t L = config_.size();
  const std::size_t j = e + 1 == L ? 0 : e + 1;
  const int d = deposition ? 1 : -1;
  config_.omega[e] -= d;
  config_.omega[j] += d;
  config_.growth[e] += d;
  cache_->ensure(config_.omega[e]);
  cache_->ensure(config_.omega[j]);
  refresh_edge(e == 0 ? L - 1 : e - 1);
  refresh_edge(e);
  refresh_edge(j);
  ++events_;
  periodic_checks();
}

void RingProcess::periodic_checks() {
  if (events_ % kCoherenceEvery == 0) {
    const double err = tree_.coherence_error();
    if (err > 1e-9 * std::max(1.0, tree_.total())) {
      std::ostringstream os;
      os << "RingProcess: rate tree drifted by " << err;
      throw InvariantViolation(os.str());
    }
  }
  if (events_ % kConservationEvery == 0 && config_.current_sum() != config_.conserved_sum)
    throw InvariantViolation("RingProcess: sum of omega changed");
}

std::optional<Event> RingProcess::step(Stream& rng) {
  const double total = tree_.total();
  if (!(total > 0.0)) return std::nullopt;
  config_.time += exponential(rng, total);
  double u = uniform01(rng) * total;
  const std::size_t e = tree_.find(u);
  const bool deposition = u < dep_[e];
  apply(e, deposition);
  return Event{e, deposition, config_.time};
}

void RingProcess::run_until(double t, Stream& rng) {
  if (t < config_.time) throw DomainError("run_until: target time is in the past");
  for (;;) {
    const double total = tree_.total();
    if (!(total > 0.0)) break;
    const double next = config_.time + exponential(rng, total);
    if (next > t) break;
    config_.time = next;
    double u = uniform01(rng) * total;
    const std::size_t e = tree_.find(u);
    apply(e, u < dep_[e]);
  }
  config_.time = t;
}

RingConfig sample_config(const SiteDistribution& dist, std::size_t L, Stream& rng) {
  return RingConfig(sample_ring(dist, L, rng));
}

RingConfig run_until(const RateSpec& spec, RingConfig config, double t, Stream& rng) {
  IntInterval w{config.omega.empty() ? 0 : config.omega.front(), config.omega.empty() ? 0 : config.omega.front()};
  for (int v : config.omega) {
    w.lo = std::min(w.lo, v);
    w.hi = std::max(w.hi, v);
  }
  RateCache cache(spec, w);
  RingProcess proc(cache, std::move(config));
  proc.run_until(t, rng);
  return std::move(proc).take_config();
}

std::int64_t observer_index(double V, double t) {
  return static_cast<std::int64_t>(std::trunc(V * t));
}

std::int64_t flux_j(const RingConfig& config, double V, double t) {
  const auto L = static_cast<std::int64_t>(config.size());
  const std::int64_t k = observer_index(V, t);
  if (2 * std::abs(k) >= L) {
    std::ostringstream os;
    os << "flux_j: observer index " << k << " outside the safe half-ring of L = " << L;
    throw DomainError(os.str());
  }
  const auto site = [L](std::int64_t i) { return static_cast<std::size_t>(((i % L) + L) % L); };
  std::int64_t j = config.growth[site(k)];
  // h_k(0) - h_0(0) from omega_i = h_{i-1} - h_i.
  if (k >= 0) {
    for (std::int64_t i = 1; i <= k; ++i) j -= config.initial_omega[site(i)];
  } else {
    for (std::int64_t i = k + 1; i <= 0; ++i) j += config.initial_omega[site(i)];
  }
  return j;
}

double max_edge_rate(const Marginal& m) {
  double c = 0.0;
  for (int y = m.z_lo(); y <= m.z_hi(); ++y)
    for (int z = m.z_lo(); z <= m.z_hi(); ++z) c = std::max(c, m.spec().s(y, z));
  return c;
}

bool light_cone_check(const Marginal& m, std::size_t L, double t, std::size_t window) {
  if (t == 0.0) return true;
  const double ct = max_edge_rate(m) * t;
  return static_cast<double>(L) >= 2.0 * (ct + static_cast<double>(window) + 10.0 * std::sqrt(ct));
}

}  // namespace depflux
