#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace cforest {

/// Area under the ROC curve by the rank statistic; tied scores count half.
/// Requires both classes present.
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// F1 of the positive class, predicting positive when score >= threshold.
/// Zero when nothing is predicted positive or nothing is truly positive.
double f1(std::span<const double> scores, std::span<const std::uint8_t> labels,
          double threshold = 0.5);

/// Kolmogorov-Smirnov statistic: the maximum over thresholds of
/// |TPR - FPR|. Requires both classes present.
double ks(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Fraction of positives captured in the ceil(rate * n) highest-scoring rows.
/// Score ties resolve toward the lower row index. Requires positives present
/// and rate in (0, 1].
double recall_at_rate(std::span<const double> scores, std::span<const std::uint8_t> labels,
                      double rate);

/// Fraction of rows classified correctly at the given threshold (>= means
/// positive).
double accuracy(std::span<const double> scores, std::span<const std::uint8_t> labels,
                double threshold = 0.5);

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
  double threshold = 0.0;
};

/// Precision-recall curve with one point per distinct score threshold,
/// ordered by ascending recall. Requires positives present.
std::vector<PrPoint> pr_curve(std::span<const double> scores,
                              std::span<const std::uint8_t> labels);

/// Writes "recall,precision,threshold" rows.
void write_pr_csv(const std::vector<PrPoint>& points, const std::filesystem::path& path);

}  // namespace cforest
