#include "cforest/quantile_sketch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "cforest/detail/text.hpp"
#include "cforest/errors.hpp"

namespace cforest {

double midpoint_threshold(double a, double b) {
  double mid = a + 0.5 * (b - a);
  if (!(mid < b)) return a;
  if (mid < a) return a;
  return mid;
}

std::size_t QuantileSketch::capacity() const {
  if (eps_ <= 0.0) return std::numeric_limits<std::size_t>::max();
  // 1/(2*eps) interior slots plus retained extremes. Pruning below this size
  // would discard resolution the error budget still allows.
  const double slots = std::ceil(1.0 / (2.0 * eps_));
  std::size_t cap = static_cast<std::size_t>(slots) + 2;
  return cap < 4 ? 4 : cap;
}

void QuantileSketch::maybe_prune() {
  if (eps_ <= 0.0) return;
  const std::size_t cap = capacity();
  if (entries_.size() <= cap) return;
  // Greedy left-to-right pass: drop an interior entry whenever the rank gap
  // bridged between its kept neighbours stays within the 2*eps*W budget.
  // Queries falling in a bridged gap are then off by at most eps*W.
  const double budget = 2.0 * eps_ * total_weight_;
  std::vector<Entry> kept;
  kept.reserve(cap);
  kept.push_back(entries_.front());
  for (std::size_t i = 1; i + 1 < entries_.size(); ++i) {
    const Entry& last = kept.back();
    const Entry& next = entries_[i + 1];
    if (next.max_rank - last.min_rank - last.weight <= budget) continue;
    kept.push_back(entries_[i]);
  }
  kept.push_back(entries_.back());
  entries_ = std::move(kept);
}

QuantileSketch QuantileSketch::build(std::span<const double> values,
                                     std::span<const double> weights, double eps) {
  if (values.size() != weights.size())
    throw DataError("sketch build: value and weight lengths differ");
  if (!(eps >= 0.0) || eps >= 0.5)
    throw ConfigError("sketch eps must lie in [0, 0.5), got " + detail::format_double(eps));

  QuantileSketch sk;
  sk.eps_ = eps;
  if (values.empty()) return sk;

  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return values[a] < values[b];
  });

  sk.entries_.reserve(values.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    const double v = values[order[k]];
    const double w = weights[order[k]];
    if (!std::isfinite(v)) throw DataError("sketch build: non-finite value");
    if (!std::isfinite(w) || w <= 0.0) throw DataError("sketch build: non-positive weight");
    if (!sk.entries_.empty() && sk.entries_.back().value == v) {
      sk.entries_.back().weight += w;
    } else {
      sk.entries_.push_back({v, w, 0.0, 0.0});
    }
  }
  // Exact prefix ranks over the coalesced entries.
  double prefix = 0.0;
  for (auto& e : sk.entries_) {
    e.min_rank = prefix;
    e.max_rank = prefix;
    prefix += e.weight;
  }
  sk.total_weight_ = prefix;
  sk.maybe_prune();
  return sk;
}

QuantileSketch QuantileSketch::build(std::span<const double> values, double eps) {
  std::vector<double> unit(values.size(), 1.0);
  return build(values, unit, eps);
}

QuantileSketch QuantileSketch::merge(const QuantileSketch& a, const QuantileSketch& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  if (a.eps_ != b.eps_)
    throw DataError("sketch merge: eps mismatch (" + detail::format_double(a.eps_) + " vs " +
                    detail::format_double(b.eps_) + ")");

  QuantileSketch out;
  out.eps_ = a.eps_;
  out.total_weight_ = a.total_weight_ + b.total_weight_;
  out.entries_.reserve(a.entries_.size() + b.entries_.size());

  const auto& ea = a.entries_;
  const auto& eb = b.entries_;
  std::size_t i = 0, j = 0;
  // Bounds on the other summary's weight strictly below a value v between its
  // consumed and unconsumed entries: everything consumed is known below (its
  // last entry's min_rank + weight), everything not yet consumed caps the
  // upper bound (next entry's max_rank), and an exhausted side contributes
  // its full weight exactly.
  auto low_bound = [](const std::vector<Entry>& e, std::size_t next, double total) {
    if (next >= e.size()) return total;
    return next == 0 ? 0.0 : e[next - 1].min_rank + e[next - 1].weight;
  };
  auto high_bound = [](const std::vector<Entry>& e, std::size_t next, double total) {
    return next >= e.size() ? total : e[next].max_rank;
  };

  while (i < ea.size() || j < eb.size()) {
    const bool take_a = j >= eb.size() || (i < ea.size() && ea[i].value <= eb[j].value);
    const bool take_b = i >= ea.size() || (j < eb.size() && eb[j].value <= ea[i].value);
    Entry e;
    if (take_a && take_b) {  // same value on both sides: combine exactly
      e.value = ea[i].value;
      e.weight = ea[i].weight + eb[j].weight;
      e.min_rank = ea[i].min_rank + eb[j].min_rank;
      e.max_rank = ea[i].max_rank + eb[j].max_rank;
      ++i;
      ++j;
    } else if (take_a) {
      e = ea[i];
      e.min_rank += low_bound(eb, j, b.total_weight_);
      e.max_rank += high_bound(eb, j, b.total_weight_);
      ++i;
    } else {
      e = eb[j];
      e.min_rank += low_bound(ea, i, a.total_weight_);
      e.max_rank += high_bound(ea, i, a.total_weight_);
      ++j;
    }
    out.entries_.push_back(e);
  }
  out.maybe_prune();
  return out;
}

double QuantileSketch::rank(double x) const {
  if (entries_.empty()) return 0.0;
  auto it = std::upper_bound(entries_.begin(), entries_.end(), x,
                             [](double q, const Entry& e) { return q < e.value; });
  if (it == entries_.begin()) return 0.0;
  const Entry& below = *(it - 1);
  if (below.value == x) return 0.5 * (below.min_rank + below.max_rank);
  if (it == entries_.end()) return total_weight_;
  return 0.5 * (below.min_rank + below.weight + it->max_rank);
}

double QuantileSketch::quantile(double target_rank) const {
  if (entries_.empty()) throw DataError("quantile query on an empty sketch");
  for (const Entry& e : entries_) {
    const double cum = 0.5 * (e.min_rank + e.max_rank) + e.weight;
    if (cum >= target_rank) return e.value;
  }
  return entries_.back().value;
}

std::vector<double> QuantileSketch::split_candidates(int max_bins) const {
  if (max_bins < 1) throw ConfigError("max_bins must be at least 1");
  const std::size_t m = entries_.size();
  if (m <= 1) return {};

  std::vector<double> mids(m - 1);
  for (std::size_t i = 0; i + 1 < m; ++i)
    mids[i] = midpoint_threshold(entries_[i].value, entries_[i + 1].value);

  std::vector<double> out;
  if (m <= static_cast<std::size_t>(max_bins)) {
    out = std::move(mids);
  } else {
    // Estimated rank of the cut between adjacent entries; monotone, so the
    // nearest boundary to each target quantile is found by binary search.
    std::vector<double> cut(m - 1);
    for (std::size_t i = 0; i + 1 < m; ++i)
      cut[i] = 0.5 * (entries_[i].min_rank + entries_[i].weight + entries_[i + 1].max_rank);
    out.reserve(static_cast<std::size_t>(max_bins) - 1);
    for (int k = 1; k < max_bins; ++k) {
      const double target =
          total_weight_ * (static_cast<double>(k) / static_cast<double>(max_bins));
      auto it = std::lower_bound(cut.begin(), cut.end(), target);
      std::size_t idx = static_cast<std::size_t>(it - cut.begin());
      if (idx == cut.size()) {
        idx = cut.size() - 1;
      } else if (idx > 0 && target - cut[idx - 1] <= cut[idx] - target) {
        idx -= 1;  // ties resolve to the lower boundary
      }
      out.push_back(mids[idx]);
    }
  }
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace cforest
