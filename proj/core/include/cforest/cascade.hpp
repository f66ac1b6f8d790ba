#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cforest/dataset.hpp"
#include "cforest/mart.hpp"
#include "cforest/matrix.hpp"

namespace cforest {

enum class StopMetric { auc, f1, ks, accuracy };

std::string to_string(StopMetric m);
StopMetric stop_metric_from_string(const std::string& name);  // ConfigError on unknown

/// Stacked-forest configuration. Every boosted model trained for layer t,
/// learner j, fold f seeds its own stream from (seed, t, j, f), so results
/// do not depend on execution order.
struct CascadeConfig {
  int k_folds = 5;
  int learners_per_layer = 4;
  std::vector<MartParams> learner_params;  // empty: learners_per_layer defaults
  MartParams selector_params;              // importance ranking model
  StopMetric stop_metric = StopMetric::auc;
  int patience = 1;
  int max_layers = 20;
  std::optional<int> top_k_features;
  std::uint64_t seed = 0;
  int threads = 1;

  CascadeConfig();
  void validate() const;
  /// learner_params padded or defaulted to exactly learners_per_layer entries.
  std::vector<MartParams> resolved_learners() const;
};

/// One cascade level: the k_folds x learners grid of boosted models.
struct Layer {
  std::vector<std::vector<MartModel>> models;  // [learner][fold]
  double validation_score = 0.0;
  std::size_t input_width = 0;
};

struct LayerResult {
  Layer layer;
  Matrix oof;  // out-of-fold class vectors, n x (learners * 2)
  double score = 0.0;
};

struct CascadeModel {
  std::vector<Layer> layers;
  std::vector<std::size_t> selected_features;  // original column ids, importance order
  std::size_t best_layer = 0;
  std::vector<double> metric_history;  // one validation score per layer
  CascadeConfig config;
  std::size_t original_width = 0;
};

/// Tracks the best observed score and the non-improvement streak.
/// observe() returns true once the streak reaches the patience budget.
class EarlyStop {
 public:
  explicit EarlyStop(int patience) : patience_(patience) {}

  bool observe(double score) {
    const int index = observed_++;
    if (score > best_score_) {
      best_score_ = score;
      best_index_ = index;
      streak_ = 0;
      return false;
    }
    return ++streak_ >= patience_;
  }

  int best_index() const { return best_index_; }
  double best_score() const { return best_score_; }
  int observed() const { return observed_; }

 private:
  int patience_;
  double best_score_ = -std::numeric_limits<double>::infinity();
  int best_index_ = -1;
  int streak_ = 0;
  int observed_ = 0;
};

/// Ranks features by boosted-model importance and keeps the top_k, ordered by
/// rank (importance ties keep the lower column index). Returns the projected
/// dataset and the kept original column ids.
std::pair<Dataset, std::vector<std::size_t>> select_features(const Dataset& ds,
                                                             const MartParams& selector,
                                                             std::size_t top_k, int threads = 1);

/// Base features with per-learner class vectors appended, learner-major:
/// columns [1 - p, p] for learner 0, then learner 1, and so on. Empty
/// class_vectors return the base features unchanged.
Matrix augment(const MatrixView& features, const MatrixView& class_vectors);

/// Trains one layer's (k_folds x learners) grid. Each model trains on the
/// rows outside its fold and predicts only its own fold, so every row of the
/// returned class vectors is out-of-fold. The layer score applies the stop
/// metric to the learner-averaged positive probability.
LayerResult train_layer(const MatrixView& x, std::span<const std::uint8_t> labels,
                        std::span<const double> weights, const FoldPlan& plan,
                        const CascadeConfig& config, int layer_index);

/// Grows layers until the validation score fails to improve for `patience`
/// consecutive layers (or max_layers is reached). The model keeps every
/// trained layer; best_layer marks the score argmax (earliest on ties).
CascadeModel train_cascade(const Dataset& ds, const CascadeConfig& config);

/// Mean positive probability over the best layer's learners, each learner
/// averaged over its fold models. Input width must match the training data.
std::vector<double> predict_cascade(const CascadeModel& model, const MatrixView& x,
                                    int threads = 1);

/// Applies the configured stop metric at threshold 0.5 where one is needed.
double evaluate_stop_metric(StopMetric metric, std::span<const double> scores,
                            std::span<const std::uint8_t> labels);

/// The fold plan train_cascade uses: stratified, seeded from config.seed.
FoldPlan cascade_fold_plan(const Dataset& ds, const CascadeConfig& config);

/// Per-model seed for layer t, learner j, fold f.
std::uint64_t cascade_model_seed(const CascadeConfig& config, int layer, int learner, int fold);

}  // namespace cforest
