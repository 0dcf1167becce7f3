#include "depflux/rate_cache.hpp"

#include <algorithm>

#include "depflux/error.hpp"
#include "depflux/sum_tree.hpp"

namespace depflux {

// ---------------------------------------------------------------------------
// SumTree

SumTree::SumTree(std::size_t leaves) : leaves_(leaves) {
  base_ = 1;
  while (base_ < leaves_) base_ <<= 1;
  nodes_.assign(2 * base_, 0.0);
}

void SumTree::set(std::size_t i, double weight) {
  std::size_t k = base_ + i;
  nodes_[k] = weight;
  for (k >>= 1; k >= 1; k >>= 1) nodes_[k] = nodes_[2 * k] + nodes_[2 * k + 1];
}

void SumTree::rebuild() {
  for (std::size_t k = base_ - 1; k >= 1; --k) nodes_[k] = nodes_[2 * k] + nodes_[2 * k + 1];
}

std::size_t SumTree::find(double& u) const {
  std::size_t k = 1;
  while (k < base_) {
    const double left = nodes_[2 * k];
    if (u < left) {
      k = 2 * k;
    } else {
      u -= left;
      k = 2 * k + 1;
    }
  }
  std::size_t i = k - base_;
  // Rounding can push u past the last positive leaf; step back to it.
  while ((i >= leaves_ || nodes_[base_ + i] <= 0.0) && i > 0) {
    --i;
    u = nodes_[base_ + i] * 0.5;
  }
  return i;
}

double SumTree::coherence_error() const {
  double plain = 0.0;
  for (std::size_t i = 0; i < leaves_; ++i) plain += nodes_[base_ + i];
  return std::abs(plain - total());
}

// ---------------------------------------------------------------------------
// RateCache

RateCache::RateCache(std::shared_ptr<const RateSpec> spec, IntInterval window)
    : spec_(std::move(spec)), window_(window) {
  if (window_.empty()) throw DomainError("RateCache: empty window");
  fill();
}

RateCache::RateCache(const RateSpec& spec, IntInterval window)
    : RateCache(std::make_shared<const RateSpec>(spec), window) {}

void RateCache::fill() {
  width_ = static_cast<std::size_t>(window_.size());
  p_.assign(width_ * width_, 0.0);
  q_.assign(width_ * width_, 0.0);
  for (int y = window_.lo; y <= window_.hi; ++y)
    for (int z = window_.lo; z <= window_.hi; ++z) {
      p_[index(y, z)] = spec_->p(y, z);
      q_[index(y, z)] = spec_->q(y, z);
    }
}

void RateCache::extend_to(int z) {
  if (!spec_->space().contains(z))
    throw InvariantViolation("RateCache: site value left the single-site space");
  const int span = std::max(4, window_.size() / 2);
  IntInterval next = window_;
  if (z < next.lo) next.lo = std::min(z, next.lo - span);
  if (z > next.hi) next.hi = std::max(z, next.hi + span);
  const auto& sp = spec_->space();
  if (sp.omega_min) next.lo = std::max(next.lo, *sp.omega_min);
  if (sp.omega_max) next.hi = std::min(next.hi, *sp.omega_max);
  window_ = next;
  ++extensions_;
  fill();
}

double RateCache::max_total() const {
  double m = 0.0;
  for (std::size_t k = 0; k < p_.size(); ++k) m = std::max(m, p_[k] + q_[k]);
  return m;
}

}  // namespace depflux
