#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace depflux {

/// Single-pass mean/variance (and covariance for paired input) with
/// pairwise merge. Either feed scalars or pairs; mixing throws.
class Accumulator {
 public:
  void update(double x);
  void update(double x, double y);
  void merge(const Accumulator& other);

  std::uint64_t count() const noexcept { return n_; }
  bool paired() const noexcept { return paired_; }
  double mean() const noexcept { return mean_x_; }
  double mean_y() const noexcept { return mean_y_; }
  /// Unbiased sample variance (0 for fewer than two samples).
  double variance() const noexcept;
  double variance_y() const noexcept;
  double covariance() const noexcept;
  double se_mean() const noexcept;

 private:
  void check_mode(bool paired);

  std::uint64_t n_ = 0;
  bool mode_set_ = false;
  bool paired_ = false;
  double mean_x_ = 0.0;
  double mean_y_ = 0.0;
  double m2_x_ = 0.0;
  double m2_y_ = 0.0;
  double c_xy_ = 0.0;
};

/// Per-batch sums of a fixed-length observable vector. Replicates are
/// assigned to batches deterministically, so the sums do not depend on how
/// work was sharded.
class BatchSums {
 public:
  BatchSums() = default;
  BatchSums(std::size_t dim, std::size_t batches);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t batches() const noexcept { return counts_.size(); }
  std::uint64_t count() const noexcept;
  std::uint64_t batch_count(std::size_t b) const noexcept { return counts_[b]; }

  void add(std::size_t batch, const std::vector<double>& obs);
  /// Adds another set of sums batch by batch (same dim and batch count).
  void merge(const BatchSums& other);

  std::vector<double> means() const;
  /// Means with batch b left out.
  std::vector<double> means_without(std::size_t b) const;

 private:
  std::size_t dim_ = 0;
  std::vector<std::vector<long double>> sums_;
  std::vector<std::uint64_t> counts_;
};

/// Batch of replicate r out of n when split into b batches.
std::size_t batch_of(std::uint64_t replicate, std::uint64_t replicates, std::size_t batches);

struct JackknifeResult {
  std::vector<double> estimate;  ///< f(full-sample means)
  std::vector<double> se;        ///< delete-one-batch jackknife SE per component
};

using Statistic = std::function<std::vector<double>(const std::vector<double>& means)>;
JackknifeResult jackknife(const BatchSums& sums, const Statistic& f);

/// One verified identity.
struct IdentityReport {
  std::string identity;
  std::string kind = "statistical";  ///< statistical | exact
  std::string model;
  std::map<std::string, double> params;
  double lhs = 0.0;
  double rhs = 0.0;
  double se_lhs = 0.0;
  double se_rhs = 0.0;
  /// SE of lhs - rhs when the two sides share trajectories; negative when
  /// the sides are independent.
  double se_diff = -1.0;
  double z = 0.0;          ///< z-score, or absolute residual for exact checks
  double threshold = 3.0;  ///< z bound, or residual tolerance
  bool pass = false;
  std::uint64_t replicates = 0;
  std::uint64_t seed = 0;
  double runtime_seconds = 0.0;
  std::string note;

  std::string to_json(int indent = -1) const;
};

/// z = |lhs - rhs| / sqrt(se_lhs^2 + se_rhs^2) (or / se_diff when given);
/// 0/0 counts as 0 and x/0 as infinity.
double z_score(double lhs, double rhs, double se_lhs, double se_rhs, double se_diff = -1.0);

IdentityReport statistical_report(std::string identity, double lhs, double rhs, double se_lhs, double se_rhs,
                                  double se_diff = -1.0, double threshold = 3.0);
IdentityReport exact_report(std::string identity, double lhs, double rhs, double tolerance);

/// Per-test level giving family-wise level alpha over m tests (Sidak).
double sidak_level(double alpha, std::size_t m);
/// Two-sided normal critical value for level alpha.
double two_sided_critical(double alpha);

/// Two-sample chi-square homogeneity test on category counts; cells empty in
/// both samples are dropped.
struct ChiSquareResult {
  double statistic = 0.0;
  double dof = 0.0;
  double p_value = 1.0;
};
ChiSquareResult chi_square_homogeneity(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b);
/// Goodness of fit of counts against probabilities; cells with expected count
/// below min_expected are pooled into one (merged into the smallest regular
/// cell if the pool is still below min_expected).
ChiSquareResult chi_square_fit(const std::vector<std::uint64_t>& counts, const std::vector<double>& probs,
                               double min_expected = 5.0);

}  // namespace depflux
