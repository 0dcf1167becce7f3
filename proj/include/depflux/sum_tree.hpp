#pragma once

#include <cstddef>
#include <vector>

namespace depflux {

/// Complete binary tree of partial sums over nonnegative leaf weights.
/// Point updates and weighted selection are O(log n); every internal node is
/// recomputed from its children on update, so the root never drifts from the
/// tree-ordered sum of the leaves.
class SumTree {
 public:
  SumTree() = default;
  explicit SumTree(std::size_t leaves);

  std::size_t size() const noexcept { return leaves_; }
  double total() const noexcept { return nodes_.empty() ? 0.0 : nodes_[1]; }
  double leaf(std::size_t i) const noexcept { return nodes_[base_ + i]; }

  void set(std::size_t i, double weight);
  /// Rebuilds all internal nodes from the leaves.
  void rebuild();

  /// Selects the leaf whose cumulative interval contains u in [0, total()).
  /// On return u holds the offset inside that leaf's interval.
  std::size_t find(double& u) const;

  /// |total() - plain left-to-right sum of the leaves|.
  double coherence_error() const;

 private:
  std::size_t leaves_ = 0;
  std::size_t base_ = 0;
  std::vector<double> nodes_;
};

}  // namespace depflux
