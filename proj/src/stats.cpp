#include "depflux/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "depflux/error.hpp"
#include "json.hpp"

namespace depflux {

void Accumulator::check_mode(bool paired) {
  if (!mode_set_) {
    mode_set_ = true;
    paired_ = paired;
  } else if (paired_ != paired) {
    throw DomainError("Accumulator: cannot mix scalar and paired updates");
  }
}

void Accumulator::update(double x) {
  check_mode(false);
  ++n_;
  const double dx = x - mean_x_;
  mean_x_ += dx / static_cast<double>(n_);
  m2_x_ += dx * (x - mean_x_);
}

void Accumulator::update(double x, double y) {
  check_mode(true);
  ++n_;
  const double n = static_cast<double>(n_);
  const double dx = x - mean_x_;
  const double dy = y - mean_y_;
  mean_x_ += dx / n;
  mean_y_ += dy / n;
  m2_x_ += dx * (x - mean_x_);
  m2_y_ += dy * (y - mean_y_);
  c_xy_ += dx * (y - mean_y_);
}

void Accumulator::merge(const Accumulator& other) {
  if (other.n_ == 0) return;
  if (n_ == 0) {
    *this = other;
    return;
  }
  if (mode_set_ && other.mode_set_ && paired_ != other.paired_)
    throw DomainError("Accumulator: cannot merge scalar and paired accumulators");
  const double na = static_cast<double>(n_);
  const double nb = static_cast<double>(other.n_);
  const double n = na + nb;
  const double dx = other.mean_x_ - mean_x_;
  const double dy = other.mean_y_ - mean_y_;
  mean_x_ += dx * nb / n;
  mean_y_ += dy * nb / n;
  m2_x_ += other.m2_x_ + dx * dx * na * nb / n;
  m2_y_ += other.m2_y_ + dy * dy * na * nb / n;
  c_xy_ += other.c_xy_ + dx * dy * na * nb / n;
  n_ += other.n_;
}

double Accumulator::variance() const noexcept {
  return n_ < 2 ? 0.0 : std::max(0.0, m2_x_ / static_cast<double>(n_ - 1));
}

double Accumulator::variance_y() const noexcept {
  return n_ < 2 ? 0.0 : std::max(0.0, m2_y_ / static_cast<double>(n_ - 1));
}

double Accumulator::covariance() const noexcept { return n_ < 2 ? 0.0 : c_xy_ / static_cast<double>(n_ - 1); }

double Accumulator::se_mean() const noexcept {
  return n_ < 2 ? 0.0 : std::sqrt(variance() / static_cast<double>(n_));
}

// ---------------------------------------------------------------------------

BatchSums::BatchSums(std::size_t dim, std::size_t batches)
    : dim_(dim), sums_(batches, std::vector<long double>(dim, 0.0L)), counts_(batches, 0) {
  if (batches < 2) throw DomainError("BatchSums: need at least 2 batches");
}

std::uint64_t BatchSums::count() const noexcept {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

void BatchSums::add(std::size_t batch, const std::vector<double>& obs) {
  if (obs.size() != dim_) throw DomainError("BatchSums::add: observable length mismatch");
  auto& s = sums_.at(batch);
  for (std::size_t k = 0; k < dim_; ++k) s[k] += obs[k];
  ++counts_[batch];
}

void BatchSums::merge(const BatchSums& other) {
  if (other.dim_ != dim_ || other.batches() != batches()) throw DomainError("BatchSums::merge: shape mismatch");
  for (std::size_t b = 0; b < batches(); ++b) {
    for (std::size_t k = 0; k < dim_; ++k) sums_[b][k] += other.sums_[b][k];
    counts_[b] += other.counts_[b];
  }
}

std::vector<double> BatchSums::means() const {
  std::vector<long double> tot(dim_, 0.0L);
  for (const auto& s : sums_)
    for (std::size_t k = 0; k < dim_; ++k) tot[k] += s[k];
  const auto n = static_cast<long double>(count());
  std::vector<double> out(dim_);
  for (std::size_t k = 0; k < dim_; ++k) out[k] = n > 0 ? static_cast<double>(tot[k] / n) : 0.0;
  return out;
}

std::vector<double> BatchSums::means_without(std::size_t b) const {
  std::vector<long double> tot(dim_, 0.0L);
  for (std::size_t c = 0; c < batches(); ++c) {
    if (c == b) continue;
    for (std::size_t k = 0; k < dim_; ++k) tot[k] += sums_[c][k];
  }
  const auto n = static_cast<long double>(count() - counts_[b]);
  std::vector<double> out(dim_);
  for (std::size_t k = 0; k < dim_; ++k) out[k] = n > 0 ? static_cast<double>(tot[k] / n) : 0.0;
  return out;
}

std::size_t batch_of(std::uint64_t replicate, std::uint64_t replicates, std::size_t batches) {
  return static_cast<std::size_t>((replicate * static_cast<std::uint64_t>(batches)) / replicates);
}

JackknifeResult jackknife(const BatchSums& sums, const Statistic& f) {
  const std::size_t B = sums.batches();
  for (std::size_t b = 0; b < B; ++b)
    if (sums.batch_count(b) == 0) throw DomainError("jackknife: empty batch; use more replicates than batches");
  JackknifeResult out;
  out.estimate = f(sums.means());
  const std::size_t m = out.estimate.size();
  std::vector<std::vector<double>> loo(B);
  std::vector<double> avg(m, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    loo[b] = f(sums.means_without(b));
    for (std::size_t k = 0; k < m; ++k) avg[k] += loo[b][k] / static_cast<double>(B);
  }
  out.se.assign(m, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t k = 0; k < m; ++k) {
      const double d = loo[b][k] - avg[k];
      out.se[k] += d * d;
    }
  for (double& s : out.se) s = std::sqrt(s * static_cast<double>(B - 1) / static_cast<double>(B));
  return out;
}

// ---------------------------------------------------------------------------

std::string IdentityReport::to_json(int indent) const {
  auto finite = [](double x) -> nlohmann::json {
    if (std::isfinite(x)) return x;
    return nullptr;
  };
  nlohmann::json j;
  j["identity"] = identity;
  j["kind"] = kind;
  j["model"] = model;
  nlohmann::json p = nlohmann::json::object();
  for (const auto& [k, v] : params) p[k] = finite(v);
  j["params"] = p;
  j["lhs"] = finite(lhs);
  j["rhs"] = finite(rhs);
  j["se_lhs"] = finite(se_lhs);
  j["se_rhs"] = finite(se_rhs);
  if (se_diff >= 0.0) j["se_diff"] = finite(se_diff);
  j["z"] = finite(z);
  j["threshold"] = threshold;
  j["pass"] = pass;
  j["replicates"] = replicates;
  j["seed"] = seed;
  j["runtime_seconds"] = runtime_seconds;
  if (!note.empty()) j["note"] = note;
  return j.dump(indent);
}

double z_score(double lhs, double rhs, double se_lhs, double se_rhs, double se_diff) {
  const double diff = std::abs(lhs - rhs);
  const double se = se_diff >= 0.0 ? se_diff : std::hypot(se_lhs, se_rhs);
  if (se == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return diff / se;
}

IdentityReport statistical_report(std::string identity, double lhs, double rhs, double se_lhs, double se_rhs,
                                  double se_diff, double threshold) {
  IdentityReport r;
  r.identity = std::move(identity);
  r.kind = "statistical";
  r.lhs = lhs;
  r.rhs = rhs;
  r.se_lhs = se_lhs;
  r.se_rhs = se_rhs;
  r.se_diff = se_diff;
  r.z = z_score(lhs, rhs, se_lhs, se_rhs, se_diff);
  r.threshold = threshold;
  r.pass = r.z <= threshold;
  return r;
}

IdentityReport exact_report(std::string identity, double lhs, double rhs, double tolerance) {
  IdentityReport r;
  r.identity = std::move(identity);
  r.kind = "exact";
  r.lhs = lhs;
  r.rhs = rhs;
  r.z = std::abs(lhs - rhs);
  r.threshold = tolerance;
  r.pass = r.z <= tolerance;
  return r;
}

double sidak_level(double alpha, std::size_t m) {
  if (m == 0) return alpha;
  return -std::expm1(std::log1p(-alpha) / static_cast<double>(m));
}

double two_sided_critical(double alpha) {
  const boost::math::normal_distribution<double> n;
  return boost::math::quantile(boost::math::complement(n, alpha / 2.0));
}

ChiSquareResult chi_square_homogeneity(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b) {
  if (a.size() != b.size()) throw DomainError("chi_square_homogeneity: category count mismatch");
  const double na = static_cast<double>(std::accumulate(a.begin(), a.end(), std::uint64_t{0}));
  const double nb = static_cast<double>(std::accumulate(b.begin(), b.end(), std::uint64_t{0}));
  if (na == 0.0 || nb == 0.0) throw DomainError("chi_square_homogeneity: empty sample");
  ChiSquareResult r;
  std::size_t cells = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double col = static_cast<double>(a[k] + b[k]);
    if (col == 0.0) continue;
    ++cells;
    const double ea = col * na / (na + nb);
    const double eb = col * nb / (na + nb);
    r.statistic += (a[k] - ea) * (a[k] - ea) / ea + (b[k] - eb) * (b[k] - eb) / eb;
  }
  r.dof = cells > 1 ? static_cast<double>(cells - 1) : 0.0;
  if (r.dof > 0.0) {
    const boost::math::chi_squared_distribution<double> chi(r.dof);
    r.p_value = boost::math::cdf(boost::math::complement(chi, r.statistic));
  }
  return r;
}

ChiSquareResult chi_square_fit(const std::vector<std::uint64_t>& counts, const std::vector<double>& probs,
                               double min_expected) {
  if (counts.size() != probs.size()) throw DomainError("chi_square_fit: category count mismatch");
  const double n = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}));
  if (n == 0.0) throw DomainError("chi_square_fit: empty sample");
  std::vector<std::pair<double, double>> cells;  // (observed, expected)
  double pooled_obs = 0.0, pooled_exp = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    const double e = n * probs[k];
    if (e < min_expected) {
      pooled_obs += static_cast<double>(counts[k]);
      pooled_exp += e;
    } else {
      cells.emplace_back(static_cast<double>(counts[k]), e);
    }
  }
  // A pool that is still too small joins the smallest regular cell.
  if (pooled_exp > 0.0 || pooled_obs > 0.0) {
    if (pooled_exp >= min_expected || cells.empty()) {
      cells.emplace_back(pooled_obs, pooled_exp);
    } else {
      auto smallest = std::min_element(cells.begin(), cells.end(),
                                       [](const auto& a, const auto& b) { return a.second < b.second; });
      smallest->first += pooled_obs;
      smallest->second += pooled_exp;
    }
  }
  ChiSquareResult r;
  for (const auto& [o, e] : cells) {
    if (e > 0.0)
      r.statistic += (o - e) * (o - e) / e;
    else if (o > 0.0)
      r.statistic = std::numeric_limits<double>::infinity();
  }
  r.dof = cells.size() > 1 ? static_cast<double>(cells.size() - 1) : 0.0;
  if (r.dof > 0.0) {
    const boost::math::chi_squared_distribution<double> chi(r.dof);
    r.p_value = std::isfinite(r.statistic) ? boost::math::cdf(boost::math::complement(chi, r.statistic)) : 0.0;
  }
  return r;
}

}  // namespace depflux
