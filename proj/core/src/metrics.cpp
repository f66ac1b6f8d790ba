#include "cforest/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>

#include "cforest/detail/text.hpp"
#include "cforest/errors.hpp"

namespace cforest {

namespace {

struct ClassCounts {
  std::size_t pos = 0;
  std::size_t neg = 0;
};

ClassCounts check_inputs(std::span<const double> scores, std::span<const std::uint8_t> labels,
                         bool need_pos, bool need_neg) {
  if (scores.size() != labels.size()) throw DataError("score and label counts differ");
  if (scores.empty()) throw DataError("metrics require at least one row");
  for (auto s : scores) {
    if (std::isnan(s)) throw DataError("NaN score");
  }
  ClassCounts c;
  for (auto y : labels) {
    if (y > 1) throw DataError("non-binary label");
    if (y) {
      ++c.pos;
    } else {
      ++c.neg;
    }
  }
  if (need_pos && c.pos == 0) throw DataError("metric requires positive rows");
  if (need_neg && c.neg == 0) throw DataError("metric requires negative rows");
  return c;
}

// Indices ordered by descending score; ties keep the lower row index first.
std::vector<std::size_t> descending_order(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  return idx;
}

}  // namespace

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  const ClassCounts c = check_inputs(scores, labels, true, true);
  // Rank statistic in integer half units: each positive scores 2 per negative
  // strictly below it and 1 per tied negative. Exact, so the brute force
  // pairwise count divides out to the identical double.
  auto idx = descending_order(scores);
  std::uint64_t half_units = 0;
  std::uint64_t neg_seen = 0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    std::uint64_t grp_pos = 0, grp_neg = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      if (labels[idx[j]]) {
        ++grp_pos;
      } else {
        ++grp_neg;
      }
      ++j;
    }
    // Negatives below this group: everything after position j.
    const std::uint64_t neg_below =
        static_cast<std::uint64_t>(c.neg) - neg_seen - grp_neg;
    half_units += grp_pos * (2 * neg_below + grp_neg);
    neg_seen += grp_neg;
    i = j;
  }
  return static_cast<double>(half_units) /
         (2.0 * static_cast<double>(c.pos) * static_cast<double>(c.neg));
}

double f1(std::span<const double> scores, std::span<const std::uint8_t> labels,
          double threshold) {
  const ClassCounts c = check_inputs(scores, labels, false, false);
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] >= threshold) {
      if (labels[i]) {
        ++tp;
      } else {
        ++fp;
      }
    }
  }
  if (tp == 0) return 0.0;  // covers no predicted positives and no true positives
  const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double recall = static_cast<double>(tp) / static_cast<double>(c.pos);
  return 2.0 * precision * recall / (precision + recall);
}

double ks(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  const ClassCounts c = check_inputs(scores, labels, true, true);
  auto idx = descending_order(scores);
  double best = 0.0;
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      if (labels[idx[j]]) {
        ++tp;
      } else {
        ++fp;
      }
      ++j;
    }
    const double diff = std::fabs(static_cast<double>(tp) / static_cast<double>(c.pos) -
                                  static_cast<double>(fp) / static_cast<double>(c.neg));
    best = std::max(best, diff);
    i = j;
  }
  return best;
}

double recall_at_rate(std::span<const double> scores, std::span<const std::uint8_t> labels,
                      double rate) {
  if (!(rate > 0.0) || rate > 1.0) throw ConfigError("rate must lie in (0, 1]");
  const ClassCounts c = check_inputs(scores, labels, true, false);
  const std::size_t n = scores.size();
  std::size_t budget =
      static_cast<std::size_t>(std::ceil(rate * static_cast<double>(n)));
  if (budget > n) budget = n;
  auto idx = descending_order(scores);
  std::size_t tp = 0;
  for (std::size_t k = 0; k < budget; ++k) tp += labels[idx[k]];
  return static_cast<double>(tp) / static_cast<double>(c.pos);
}

double accuracy(std::span<const double> scores, std::span<const std::uint8_t> labels,
                double threshold) {
  check_inputs(scores, labels, false, false);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (predicted == (labels[i] != 0)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

std::vector<PrPoint> pr_curve(std::span<const double> scores,
                              std::span<const std::uint8_t> labels) {
  const ClassCounts c = check_inputs(scores, labels, true, false);
  auto idx = descending_order(scores);
  std::vector<PrPoint> out;
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      if (labels[idx[j]]) {
        ++tp;
      } else {
        ++fp;
      }
      ++j;
    }
    PrPoint pt;
    pt.threshold = scores[idx[i]];
    pt.recall = static_cast<double>(tp) / static_cast<double>(c.pos);
    pt.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    out.push_back(pt);
    i = j;
  }
  return out;  // descending threshold walk yields ascending recall
}

void write_pr_csv(const std::vector<PrPoint>& points, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "recall,precision,threshold\n";
  for (const auto& pt : points) {
    out << detail::format_double(pt.recall) << ',' << detail::format_double(pt.precision) << ','
        << detail::format_double(pt.threshold) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace cforest
