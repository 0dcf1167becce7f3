#include "depflux/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "depflux/error.hpp"

namespace depflux {

namespace {

constexpr double kNegativeSlack = 1e-12;
constexpr std::uint64_t kOrderingEvery = 10'000;
constexpr std::uint64_t kCoherenceEvery = 1u << 16;

template <class P, class Q>
CoupledRates table_rows(P p, Q q, int ei, int ej, int zi, int zj) {
  CoupledRates r{};
  const double p_mixed = p(ei, zj);
  const double q_mixed = q(zi, ej);
  r[0] = p(zi, zj) - p_mixed;
  r[1] = p(ei, ej) - p_mixed;
  r[2] = p_mixed;
  r[3] = q(zi, zj) - q_mixed;
  r[4] = q(ei, ej) - q_mixed;
  r[5] = q_mixed;
  for (std::size_t k = 0; k < r.size(); ++k) {
    if (r[k] < -kNegativeSlack) {
      std::ostringstream os;
      os << "coupled rate row " << k + 1 << " is negative (" << r[k] << ") at eta = (" << ei << ", " << ej
         << "), zeta = (" << zi << ", " << zj << "); rates are not attractive";
      throw ModelError(os.str());
    }
    if (r[k] < 0.0) r[k] = 0.0;
  }
  return r;
}

double sum_rows(const CoupledRates& r) {
  double s = 0.0;
  for (double v : r) s += v;
  return s;
}

}  // namespace

CoupledConfig::CoupledConfig(RingConfig eta_in, RingConfig zeta_in) : eta(std::move(eta_in)), zeta(std::move(zeta_in)) {
  if (eta.size() != zeta.size()) throw DomainError("CoupledConfig: eta and zeta differ in length");
  if (eta.size() < 2) throw DomainError("CoupledConfig: ring needs at least 2 sites");
  d.resize(eta.size());
  for (std::size_t i = 0; i < eta.size(); ++i) {
    d[i] = zeta.omega[i] - eta.omega[i];
    if (d[i] < 0) throw DomainError("CoupledConfig: eta must be <= zeta sitewise");
    total_d += d[i];
  }
  zeta.time = eta.time;
  if (total_d == 1) {
    const auto L = static_cast<std::int64_t>(eta.size());
    const auto s = static_cast<std::int64_t>(std::find(d.begin(), d.end(), 1) - d.begin());
    q = 2 * s <= L ? s : s - L;
  }
}

std::optional<std::size_t> CoupledConfig::discrepancy_site() const {
  if (!q) return std::nullopt;
  const auto L = static_cast<std::int64_t>(d.size());
  return static_cast<std::size_t>(((*q % L) + L) % L);
}

CoupledRates coupled_edge_rates(const RateSpec& spec, int eta_i, int eta_j, int zeta_i, int zeta_j) {
  if (eta_i > zeta_i || eta_j > zeta_j) throw DomainError("coupled_edge_rates: eta must be <= zeta on the edge");
  const auto& sp = spec.space();
  for (int v : {eta_i, eta_j, zeta_i, zeta_j})
    if (!sp.contains(v)) throw DomainError("coupled_edge_rates: site value outside I");
  return table_rows([&](int y, int z) { return spec.p(y, z); }, [&](int y, int z) { return spec.q(y, z); }, eta_i,
                    eta_j, zeta_i, zeta_j);
}

CoupledProcess::CoupledProcess(RateCache& cache, CoupledConfig config, OrderingCheck check)
    : cache_(&cache), config_(std::move(config)), check_(check), rates_(config_.d.size()), tree_(config_.d.size()) {
  if (config_.d.size() < 2) throw DomainError("CoupledProcess: ring needs at least 2 sites");
  for (int w : config_.eta.omega) cache_->ensure(w);
  for (int w : config_.zeta.omega) cache_->ensure(w);
  for (std::size_t e = 0; e < rates_.size(); ++e) {
    rates_[e] = rates_for(e);
    tree_.set(e, sum_rows(rates_[e]));
  }
}

CoupledRates CoupledProcess::rates_for(std::size_t e) const {
  const std::size_t L = config_.d.size();
  const std::size_t j = e + 1 == L ? 0 : e + 1;
  const RateCache& c = *cache_;
  return table_rows([&c](int y, int z) { return c.p(y, z); }, [&c](int y, int z) { return c.q(y, z); },
                    config_.eta.omega[e], config_.eta.omega[j], config_.zeta.omega[e], config_.zeta.omega[j]);
}

void CoupledProcess::refresh_edge(std::size_t e) {
  rates_[e] = rates_for(e);
  tree_.set(e, sum_rows(rates_[e]));
}

void CoupledProcess::apply(std::size_t e, int row) {
  const std::size_t L = config_.d.size();
  const std::size_t j = e + 1 == L ? 0 : e + 1;
  // Deposition moves one unit from site i to site j; removal the reverse.
  const bool deposition = row < 3;
  const int delta = deposition ? 1 : -1;
  const bool moves_eta = row == 1 || row == 2 || row == 4 || row == 5;
  const bool moves_zeta = row == 0 || row == 2 || row == 3 || row == 5;

  auto move = [&](RingConfig& c) {
    c.omega[e] -= delta;
    c.omega[j] += delta;
    c.growth[e] += delta;
    cache_->ensure(c.omega[e]);
    cache_->ensure(c.omega[j]);
  };
  if (moves_eta) move(config_.eta);
  if (moves_zeta) move(config_.zeta);

  if (moves_eta != moves_zeta) {
    // Discrepancy steps i -> i+1 on rows 1 and 5 (0 and 4 here), i+1 -> i on rows 2 and 4.
    const int dir = (row == 0 || row == 4) ? 1 : -1;
    const std::size_t from = dir > 0 ? e : j;
    const std::size_t to = dir > 0 ? j : e;
    config_.d[from] -= 1;
    config_.d[to] += 1;
    if (config_.d[from] < 0) throw InvariantViolation("CoupledProcess: ordering eta <= zeta violated");
    if (config_.q) {
      *config_.q += dir;
      if (2 * std::abs(*config_.q) >= static_cast<std::int64_t>(L))
        throw InvariantViolation("CoupledProcess: second class particle wound past half the ring");
    }
  }

  refresh_edge(e == 0 ? L - 1 : e - 1);
  refresh_edge(e);
  refresh_edge(j);
  ++events_;

  if (check_ == OrderingCheck::every_event || events_ % kOrderingEvery == 0) verify_invariants();
  if (events_ % kCoherenceEvery == 0) {
    const double err = tree_.coherence_error();
    if (err > 1e-9 * std::max(1.0, tree_.total())) {
      std::ostringstream os;
      os << "CoupledProcess: rate tree drifted by " << err;
      throw InvariantViolation(os.str());
    }
  }
}

void CoupledProcess::verify_invariants() const {
  std::int64_t total = 0;
  for (std::size_t i = 0; i < config_.d.size(); ++i) {
    const int diff = config_.zeta.omega[i] - config_.eta.omega[i];
    if (diff < 0) throw InvariantViolation("CoupledProcess: ordering eta <= zeta violated");
    if (diff != config_.d[i]) throw InvariantViolation("CoupledProcess: discrepancy counts out of sync");
    total += diff;
  }
  if (total != config_.total_d) throw InvariantViolation("CoupledProcess: number of discrepancies changed");
  if (config_.eta.current_sum() != config_.eta.conserved_sum ||
      config_.zeta.current_sum() != config_.zeta.conserved_sum)
    throw InvariantViolation("CoupledProcess: sum of omega changed");
  if (auto s = config_.discrepancy_site(); s && config_.d[*s] != 1)
    throw InvariantViolation("CoupledProcess: second class particle position out of sync");
}

std::optional<CoupledEvent> CoupledProcess::step(Stream& rng) {
  const double total = tree_.total();
  if (!(total > 0.0)) return std::nullopt;
  const double time = config_.eta.time + exponential(rng, total);
  config_.eta.time = config_.zeta.time = time;
  double u = uniform01(rng) * total;
  const std::size_t e = tree_.find(u);
  const auto& r = rates_[e];
  int row = 0;
  while (row < 5 && (u >= r[row] || r[row] <= 0.0)) {
    u -= r[row];
    ++row;
  }
  // Rounding may leave u just past the last row; fall back to the last positive one.
  while (r[row] <= 0.0 && row > 0) --row;
  apply(e, row);
  return CoupledEvent{e, row, time};
}

void CoupledProcess::run_until(double t, Stream& rng) {
  if (t < config_.eta.time) throw DomainError("run_until: target time is in the past");
  for (;;) {
    const double total = tree_.total();
    if (!(total > 0.0)) break;
    const double next = config_.eta.time + exponential(rng, total);
    if (next > t) break;
    config_.eta.time = config_.zeta.time = next;
    double u = uniform01(rng) * total;
    const std::size_t e = tree_.find(u);
    const auto& r = rates_[e];
    int row = 0;
    while (row < 5 && (u >= r[row] || r[row] <= 0.0)) {
      u -= r[row];
      ++row;
    }
    while (r[row] <= 0.0 && row > 0) --row;
    apply(e, row);
  }
  config_.eta.time = config_.zeta.time = t;
}

CoupledConfig sample_second_class_start(const Marginal& m, const HatMarginal& hat, std::size_t L, Stream& rng) {
  if (L < 2) throw DomainError("sample_second_class_start: ring needs at least 2 sites");
  std::vector<int> omega(L);
  omega[0] = hat.sample(rng);
  for (std::size_t i = 1; i < L; ++i) omega[i] = m.sample(rng);
  const auto& sp = m.spec().space();
  if (sp.omega_max && omega[0] >= *sp.omega_max)
    throw InvariantViolation("sample_second_class_start: origin drawn at the upper bound of I");
  std::vector<int> plus = omega;
  plus[0] += 1;
  return CoupledConfig(RingConfig(std::move(omega)), RingConfig(std::move(plus)));
}

SecondClassRun run_second_class(RateCache& cache, const Marginal& m, const HatMarginal& hat, std::size_t L, double t,
                                Stream& rng) {
  CoupledProcess proc(cache, sample_second_class_start(m, hat, L, rng));
  proc.run_until(t, rng);
  CoupledConfig final = std::move(proc).take_config();
  const std::int64_t q = final.q.value_or(0);
  return SecondClassRun{q, std::move(final)};
}

SecondClassRun run_second_class(const Marginal& m, const HatMarginal& hat, std::size_t L, double t, Stream& rng) {
  IntInterval w = m.support();
  if (m.spec().space().contains(static_cast<long long>(w.hi) + 1)) w.hi += 1;
  RateCache cache(m.spec(), w);
  return run_second_class(cache, m, hat, L, t, rng);
}

}  // namespace depflux
