#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "cforest/dataset.hpp"
#include "cforest/matrix.hpp"

namespace cforest {

/// Gradient boosting hyperparameters.
struct MartParams {
  int num_trees = 50;
  int max_depth = 5;              // root depth 0; at most 2^max_depth leaves
  double learning_rate = 0.1;
  double lambda = 1.0;            // L2 penalty on leaf weights
  double gamma = 0.0;             // fixed cost per additional leaf
  double min_child_weight = 1.0;  // minimum hessian weight per child
  double feature_subsample = 0.8; // fraction of features drawn per tree
  int max_bins = 256;             // split candidate budget per feature
  std::optional<double> eps;      // sketch rank error; default 1/(2*max_bins)
  std::uint64_t seed = 0;

  double effective_eps() const { return eps ? *eps : 1.0 / (2.0 * max_bins); }
  void validate() const;  // throws ConfigError on out-of-range values
};

struct TreeNode {
  std::int32_t feature = -1;   // -1 marks a leaf
  double threshold = 0.0;      // rows with x[feature] <= threshold go left
  std::int32_t left = -1;
  std::int32_t right = -1;
  double gain = 0.0;           // realized split gain, > 0 on internal nodes
  double value = 0.0;          // leaf weight

  bool is_leaf() const { return feature < 0; }
};

/// Single regression tree. nodes[0] is the root.
struct Tree {
  std::vector<TreeNode> nodes;

  int route(std::span<const double> row) const;  // leaf node index for the row
  double value_at(std::span<const double> row) const { return nodes[route(row)].value; }
};

/// Structural checks: parent/child wiring forms a proper binary tree, leaves
/// carry no children, internal nodes keep positive recorded gain. Throws
/// DataError when violated.
void validate_tree(const Tree& tree);

/// Additive logistic model: margin(x) = base_score
///   + learning_rate * sum of tree leaf values.
struct MartModel {
  double base_score = 0.0;
  std::size_t num_features = 0;
  MartParams params;
  std::vector<Tree> trees;
};

/// First and second derivative of the logistic log-loss with respect to the
/// margin: p - y and p * (1 - p), the hessian floored at 1e-16.
std::pair<double, double> logistic_grad_hess(int label, double margin);

/// Regularized gain of a split given left/right gradient and hessian sums.
double split_gain(double g_left, double h_left, double g_right, double h_right, double lambda,
                  double gamma);

/// Split candidate thresholds for every feature, with each bound row mapped
/// to the bin between consecutive thresholds. Bin b of feature f holds rows
/// with threshold[b-1] < x <= threshold[b]; the last bin is unbounded above.
class BinnedDataset {
 public:
  /// Quantile-sketch candidates: per feature, values are sketched in
  /// contiguous shards, merged, and at most max_bins - 1 thresholds kept.
  /// rows selects the subset of x to bind (positions then index that subset).
  static BinnedDataset build(const MatrixView& x, std::span<const std::size_t> rows,
                             std::span<const double> weights, int max_bins, double eps,
                             int threads = 1);

  /// Exhaustive candidates: every midpoint between adjacent distinct values.
  static BinnedDataset build_exhaustive(const MatrixView& x, std::span<const std::size_t> rows,
                                        std::span<const double> weights, int threads = 1);

  std::size_t rows() const { return rows_; }
  std::size_t num_features() const { return thresholds_.size(); }
  std::span<const double> thresholds(std::size_t f) const { return thresholds_[f]; }
  std::span<const std::uint16_t> bins(std::size_t f) const { return bins_[f]; }
  std::size_t max_bin_count() const;  // widest per-feature bin count

 private:
  std::size_t rows_ = 0;
  std::vector<std::vector<double>> thresholds_;
  std::vector<std::vector<std::uint16_t>> bins_;  // column-major over bound rows
};

struct SplitDecision {
  std::size_t feature = 0;
  double threshold = 0.0;
  int bin = 0;  // candidate index of threshold within the feature
  double gain = 0.0;
};

/// Best split over the given positions (indices into the binned subset),
/// scanning the listed features (all features when the mask is empty).
/// Gradients are weighted by w. Returns nothing when no candidate has
/// positive gain or every candidate leaves a child below min_child_weight.
/// Ties break toward the lowest feature index, then the lowest threshold.
std::optional<SplitDecision> find_best_split(const BinnedDataset& binned,
                                             std::span<const std::uint32_t> positions,
                                             std::span<const double> g, std::span<const double> h,
                                             std::span<const double> w, const MartParams& params,
                                             std::span<const std::size_t> feature_mask = {});

/// Grows one depth-limited tree by greedy best-first splitting on the given
/// weighted gradients.
Tree grow_tree(const BinnedDataset& binned, std::span<const double> g, std::span<const double> h,
               std::span<const double> w, const MartParams& params,
               std::span<const std::size_t> feature_mask = {});

/// Boosted training on a row subset of x. Binds candidates once with the
/// quantile sketch, then adds params.num_trees trees, each fit to the
/// weighted second-order gradient of the logistic loss at the current margin.
/// base_score is the weighted prior log-odds. Requires both classes present.
MartModel train_mart(const MatrixView& x, std::span<const std::uint8_t> labels,
                     std::span<const double> weights, std::span<const std::size_t> rows,
                     const MartParams& params, int threads = 1);

MartModel train_mart(const Dataset& ds, const MartParams& params, int threads = 1);

/// Reference trainer: identical boosting loop with exhaustive split
/// candidates. Agrees tree for tree with train_mart whenever every feature
/// has at most max_bins distinct values.
MartModel train_mart_exact(const Dataset& ds, const MartParams& params, int threads = 1);

/// Raw margins for every row of x (or the selected rows).
std::vector<double> predict_margin(const MartModel& model, const MatrixView& x, int threads = 1);
std::vector<double> predict_margin(const MartModel& model, const MatrixView& x,
                                   std::span<const std::size_t> rows, int threads = 1);

/// Logistic probabilities for every row of x (or the selected rows).
std::vector<double> predict_proba(const MartModel& model, const MatrixView& x, int threads = 1);
std::vector<double> predict_proba(const MartModel& model, const MatrixView& x,
                                  std::span<const std::size_t> rows, int threads = 1);

/// Per-feature importance: split gains summed within each tree, averaged
/// over all trees. Zero for features never split on.
std::vector<double> feature_importance(const MartModel& model);

}  // namespace cforest
