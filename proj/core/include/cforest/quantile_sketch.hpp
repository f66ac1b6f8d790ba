#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cforest {

/// Mergeable weighted quantile summary in the Greenwald-Khanna style.
///
/// Each entry keeps the weight observed exactly at `value` together with
/// lower and upper bounds on the total weight strictly below `value`.
/// Invariants, with W the total weight and eps the rank error bound:
///  - entry values are strictly increasing; the global minimum and maximum
///    are always retained
///  - min_rank <= max_rank and max_rank - min_rank <= 2 * eps * W
///  - rank and quantile queries are within eps * W of an exact summary
///
/// eps = 0 keeps every distinct value and answers queries exactly.
class QuantileSketch {
 public:
  struct Entry {
    double value = 0.0;
    double weight = 0.0;    // weight observed exactly at value
    double min_rank = 0.0;  // lower bound on weight strictly below value
    double max_rank = 0.0;  // upper bound on weight strictly below value
  };

  QuantileSketch() = default;

  /// Builds a summary of the weighted values. Weights must be finite and
  /// strictly positive, values finite; eps must lie in [0, 0.5).
  static QuantileSketch build(std::span<const double> values, std::span<const double> weights,
                              double eps);

  /// Builds with unit weights.
  static QuantileSketch build(std::span<const double> values, double eps);

  /// Combines two summaries over disjoint data. Error bounds add through the
  /// bracketing ranks; the result is pruned back to the size budget. Merging
  /// summaries with different eps is refused (DataError). An empty side acts
  /// as the identity.
  static QuantileSketch merge(const QuantileSketch& a, const QuantileSketch& b);

  /// Estimated total weight strictly below x.
  double rank(double x) const;

  /// Smallest retained value whose estimated cumulative weight (inclusive of
  /// the value itself) reaches target_rank.
  double quantile(double target_rank) const;

  /// At most max_bins - 1 strictly increasing thresholds, each strictly
  /// between two retained values. When at most max_bins distinct values were
  /// retained this returns every midpoint between adjacent values; otherwise
  /// thresholds approximate the k/max_bins weight quantiles within eps * W.
  std::vector<double> split_candidates(int max_bins) const;

  double total_weight() const { return total_weight_; }
  double eps() const { return eps_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

 private:
  void maybe_prune();
  std::size_t capacity() const;

  std::vector<Entry> entries_;
  double eps_ = 0.0;
  double total_weight_ = 0.0;
};

/// Threshold strictly separating a from b when possible: the midpoint, or a
/// itself when rounding collapses the midpoint onto b (x <= a still routes a
/// left of b).
double midpoint_threshold(double a, double b);

}  // namespace cforest
