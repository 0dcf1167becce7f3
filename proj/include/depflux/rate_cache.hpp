#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "depflux/model_spec.hpp"

namespace depflux {

/// Dense memo of p(y, z) and q(y, z) over a square window of I. The window
/// grows on demand when a simulation carries a site outside it; growth is
/// counted so runs can report excursions.
class RateCache {
 public:
  RateCache(std::shared_ptr<const RateSpec> spec, IntInterval window);
  RateCache(const RateSpec& spec, IntInterval window);

  const RateSpec& spec() const noexcept { return *spec_; }
  const std::shared_ptr<const RateSpec>& spec_ptr() const noexcept { return spec_; }
  IntInterval window() const noexcept { return window_; }
  std::size_t extensions() const noexcept { return extensions_; }

  bool covers(int z) const noexcept { return window_.contains(z); }
  /// Makes sure z is covered, growing the window if needed.
  void ensure(int z) {
    if (!covers(z)) extend_to(z);
  }

  double p(int y, int z) const noexcept { return p_[index(y, z)]; }
  double q(int y, int z) const noexcept { return q_[index(y, z)]; }

  /// Largest p + q over the current window (a per-edge rate bound).
  double max_total() const;

 private:
  std::size_t index(int y, int z) const noexcept {
    return static_cast<std::size_t>(y - window_.lo) * width_ + static_cast<std::size_t>(z - window_.lo);
  }
  void extend_to(int z);
  void fill();

  std::shared_ptr<const RateSpec> spec_;
  IntInterval window_;
  std::size_t width_ = 0;
  std::size_t extensions_ = 0;
  std::vector<double> p_;
  std::vector<double> q_;
};

}  // namespace depflux
