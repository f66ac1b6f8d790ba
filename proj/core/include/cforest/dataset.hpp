#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cforest/matrix.hpp"

namespace cforest {

/// Labeled, weighted sample table. Immutable once constructed; every
/// constructor validates the invariants below and throws DataError when they
/// do not hold:
///  - features are finite doubles, row-major, all rows the same width
///  - labels are exactly 0 or 1, one per row
///  - weights are finite and strictly positive, one per row
///  - feature_names, when present, has one name per column
class Dataset {
 public:
  Dataset() = default;
  Dataset(Matrix features, std::vector<std::uint8_t> labels, std::vector<double> weights,
          std::vector<std::string> feature_names = {});

  /// Convenience constructor with unit weights.
  Dataset(Matrix features, std::vector<std::uint8_t> labels,
          std::vector<std::string> feature_names = {});

  std::size_t rows() const { return features_.rows(); }
  std::size_t cols() const { return features_.cols(); }
  const Matrix& features() const { return features_; }
  MatrixView view() const { return features_.view(); }
  const std::vector<std::uint8_t>& labels() const { return labels_; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }

  std::size_t positives() const;

  /// New dataset keeping the given columns, in the given order.
  Dataset select_columns(std::span<const std::size_t> keep) const;

  /// New dataset keeping the given rows, in the given order.
  Dataset select_rows(std::span<const std::size_t> keep) const;

  /// Same dataset with the weight vector replaced (re-validated).
  Dataset with_weights(std::vector<double> weights) &&;

 private:
  Matrix features_;
  std::vector<std::uint8_t> labels_;
  std::vector<double> weights_;
  std::vector<std::string> feature_names_;
};

/// Cross-validation fold assignment: fold(r) in [0, k) for every row.
struct FoldPlan {
  int k = 0;
  std::vector<int> assignments;

  /// Rows assigned to `fold` (the held-out part), in increasing row order.
  std::vector<std::size_t> rows_in(int fold) const;
  /// Rows assigned to any other fold (the training part), in increasing order.
  std::vector<std::size_t> rows_outside(int fold) const;
};

/// CSV column addressed either by header name or by zero-based position.
struct ColumnRef {
  std::optional<std::string> name;
  std::optional<std::size_t> index;

  static ColumnRef by_name(std::string n) { return {std::move(n), std::nullopt}; }
  static ColumnRef by_index(std::size_t i) { return {std::nullopt, i}; }
  /// "3" selects position 3, anything else is a header name.
  static ColumnRef parse(const std::string& text);
};

/// Loads a numeric CSV into a Dataset. The label column is removed from the
/// feature matrix; the optional weight column likewise. Reports malformed
/// content (ragged rows, non-numeric cells, non-binary labels, non-positive
/// weights) as DataError with the offending 1-based row and column.
Dataset load_csv(const std::filesystem::path& path, bool has_header, const ColumnRef& label,
                 const std::optional<ColumnRef>& weight = std::nullopt);

/// Writes features plus a trailing "label" column (and optionally a "weight"
/// column). Numbers use shortest round-trip formatting, so
/// load_csv(write_csv(ds)) reproduces the dataset exactly.
void write_csv(const Dataset& ds, const std::filesystem::path& path, bool include_weights = false);

/// Loads a numeric CSV as a bare matrix (no label requirement), optionally
/// dropping one column. Returns the matrix and the kept column names.
std::pair<Matrix, std::vector<std::string>> load_csv_matrix(
    const std::filesystem::path& path, bool has_header,
    const std::optional<ColumnRef>& drop = std::nullopt);

/// Splits rows into k folds. Stratified mode shuffles each class separately
/// and deals rows round-robin, so per-fold positive counts differ by at most
/// one; it requires at least k rows of each class. Unstratified mode deals the
/// shuffled row list round-robin.
FoldPlan kfold_split(const Dataset& ds, int k, std::uint64_t seed, bool stratified = true);

/// Inverse-frequency class weights: the minority class gets
/// majority_count / minority_count, the majority class 1.0.
std::vector<double> balanced_weights(std::span<const std::uint8_t> labels);

/// Synthetic imbalanced binary classification data with exactly
/// round(n * pos_rate) positive rows. The first d_informative columns carry
/// signal (mean shifts, a sign interaction with the preceding column, and
/// variance scaling); the rest are standard normal noise. Weights are 1.
Dataset synth_imbalanced(std::size_t n, std::size_t d, std::size_t d_informative, double pos_rate,
                         std::uint64_t seed);

}  // namespace cforest
