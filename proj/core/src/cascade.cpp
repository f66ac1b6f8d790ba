#include "cforest/cascade.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>
#include <utility>

#include "cforest/detail/parallel.hpp"
#include "cforest/detail/rng.hpp"
#include "cforest/errors.hpp"
#include "cforest/metrics.hpp"

namespace cforest {

std::string to_string(StopMetric m) {
  switch (m) {
    case StopMetric::auc: return "auc";
    case StopMetric::f1: return "f1";
    case StopMetric::ks: return "ks";
    case StopMetric::accuracy: return "accuracy";
  }
  return "auc";
}

StopMetric stop_metric_from_string(const std::string& name) {
  if (name == "auc") return StopMetric::auc;
  if (name == "f1") return StopMetric::f1;
  if (name == "ks") return StopMetric::ks;
  if (name == "accuracy") return StopMetric::accuracy;
  throw ConfigError("unknown stop metric '" + name + "'");
}

CascadeConfig::CascadeConfig() {
  selector_params.feature_subsample = 1.0;  // ranking sees every feature
}

void CascadeConfig::validate() const {
  if (k_folds < 2) throw ConfigError("k_folds must be at least 2");
  if (learners_per_layer < 1) throw ConfigError("learners_per_layer must be at least 1");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (max_layers < 1) throw ConfigError("max_layers must be at least 1");
  if (threads < 1) throw ConfigError("threads must be at least 1");
  if (top_k_features && *top_k_features < 1)
    throw ConfigError("top_k_features must be at least 1");
  if (!learner_params.empty() &&
      learner_params.size() != static_cast<std::size_t>(learners_per_layer))
    throw ConfigError("learner_params must be empty or hold one entry per learner");
  for (const auto& p : learner_params) p.validate();
  selector_params.validate();
}

std::vector<MartParams> CascadeConfig::resolved_learners() const {
  if (!learner_params.empty()) return learner_params;
  return std::vector<MartParams>(static_cast<std::size_t>(learners_per_layer), MartParams{});
}

double evaluate_stop_metric(StopMetric metric, std::span<const double> scores,
                            std::span<const std::uint8_t> labels) {
  switch (metric) {
    case StopMetric::auc: return auc(scores, labels);
    case StopMetric::f1: return f1(scores, labels);
    case StopMetric::ks: return ks(scores, labels);
    case StopMetric::accuracy: return accuracy(scores, labels);
  }
  return auc(scores, labels);
}

std::uint64_t cascade_model_seed(const CascadeConfig& config, int layer, int learner, int fold) {
  return detail::mix_seed(config.seed, 0xca5cadeULL, static_cast<std::uint64_t>(layer),
                          static_cast<std::uint64_t>(learner), static_cast<std::uint64_t>(fold));
}

FoldPlan cascade_fold_plan(const Dataset& ds, const CascadeConfig& config) {
  return kfold_split(ds, config.k_folds, detail::mix_seed(config.seed, 0xf01d5ULL), true);
}

std::pair<Dataset, std::vector<std::size_t>> select_features(const Dataset& ds,
                                                             const MartParams& selector,
                                                             std::size_t top_k, int threads) {
  if (top_k < 1) throw ConfigError("top_k must be at least 1");
  if (top_k > ds.cols())
    throw ConfigError("top_k " + std::to_string(top_k) + " exceeds the " +
                      std::to_string(ds.cols()) + " available columns");
  MartModel model = train_mart(ds, selector, threads);
  std::vector<double> imp = feature_importance(model);
  std::vector<std::size_t> order(imp.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (imp[a] != imp[b]) return imp[a] > imp[b];
    return a < b;
  });
  order.resize(top_k);
  return {ds.select_columns(order), std::move(order)};
}

Matrix augment(const MatrixView& features, const MatrixView& class_vectors) {
  if (class_vectors.cols == 0 || class_vectors.rows == 0) {
    Matrix out(features.rows, features.cols);
    std::memcpy(out.data(), features.data, features.rows * features.cols * sizeof(double));
    return out;
  }
  if (class_vectors.rows != features.rows)
    throw DataError("class vector row count does not match the feature rows");
  Matrix out(features.rows, features.cols + class_vectors.cols);
  for (std::size_t r = 0; r < features.rows; ++r) {
    double* dst = out.data() + r * out.cols();
    std::memcpy(dst, features.data + r * features.cols, features.cols * sizeof(double));
    std::memcpy(dst + features.cols, class_vectors.data + r * class_vectors.cols,
                class_vectors.cols * sizeof(double));
  }
  return out;
}

LayerResult train_layer(const MatrixView& x, std::span<const std::uint8_t> labels,
                        std::span<const double> weights, const FoldPlan& plan,
                        const CascadeConfig& config, int layer_index) {
  config.validate();
  if (plan.k != config.k_folds) throw ConfigError("fold plan does not match k_folds");
  if (plan.assignments.size() != x.rows)
    throw DataError("fold plan does not cover every row");

  const int k = config.k_folds;
  const int l = config.learners_per_layer;
  const auto learners = config.resolved_learners();

  std::vector<std::vector<std::size_t>> in_fold(k), out_fold(k);
  for (int f = 0; f < k; ++f) {
    in_fold[f] = plan.rows_in(f);
    out_fold[f] = plan.rows_outside(f);
    if (in_fold[f].empty() || out_fold[f].empty())
      throw DataError("fold " + std::to_string(f) + " is empty");
  }

  LayerResult res;
  res.layer.input_width = x.cols;
  res.layer.models.assign(l, std::vector<MartModel>(k));
  res.oof = Matrix(x.rows, static_cast<std::size_t>(l) * 2);

  // One task per (learner, fold); every write lands in that task's own model
  // slot and fold rows, so the grid can run in any order.
  detail::parallel_for(static_cast<std::size_t>(k) * l, config.threads, [&](std::size_t task) {
    const int j = static_cast<int>(task / k);
    const int f = static_cast<int>(task % k);
    MartParams params = learners[j];
    params.seed = cascade_model_seed(config, layer_index, j, f);
    MartModel model = train_mart(x, labels, weights, out_fold[f], params, 1);
    std::vector<double> p = predict_proba(model, x, in_fold[f], 1);
    for (std::size_t i = 0; i < in_fold[f].size(); ++i) {
      const std::size_t row = in_fold[f][i];
      res.oof.at(row, 2 * j) = 1.0 - p[i];
      res.oof.at(row, 2 * j + 1) = p[i];
    }
    res.layer.models[j][f] = std::move(model);
  });

  std::vector<double> avg(x.rows, 0.0);
  const double inv = 1.0 / static_cast<double>(l);
  for (std::size_t r = 0; r < x.rows; ++r) {
    double sum = 0.0;
    for (int j = 0; j < l; ++j) sum += res.oof.at(r, 2 * j + 1);
    avg[r] = sum * inv;
  }
  res.score = evaluate_stop_metric(config.stop_metric, avg, labels);
  res.layer.validation_score = res.score;
  return res;
}

CascadeModel train_cascade(const Dataset& ds, const CascadeConfig& config) {
  config.validate();

  CascadeModel model;
  model.config = config;
  model.original_width = ds.cols();

  const Dataset* working = &ds;
  Dataset selected;
  if (config.top_k_features) {
    auto [sel, idx] = select_features(ds, config.selector_params,
                                      static_cast<std::size_t>(*config.top_k_features),
                                      config.threads);
    selected = std::move(sel);
    model.selected_features = std::move(idx);
    working = &selected;
  } else {
    model.selected_features.resize(ds.cols());
    std::iota(model.selected_features.begin(), model.selected_features.end(), std::size_t{0});
  }

  const FoldPlan plan = cascade_fold_plan(*working, config);
  const MatrixView base = working->view();

  EarlyStop stop(config.patience);
  Matrix augmented;
  Matrix oof;
  for (int t = 0; t < config.max_layers; ++t) {
    MatrixView input = base;
    if (t > 0) {
      augmented = augment(base, oof.view());
      input = augmented.view();
    }
    LayerResult res =
        train_layer(input, working->labels(), working->weights(), plan, config, t);
    model.layers.push_back(std::move(res.layer));
    model.metric_history.push_back(res.score);
    if (stop.observe(res.score)) break;
    oof = std::move(res.oof);
  }
  model.best_layer = static_cast<std::size_t>(stop.best_index());
  return model;
}

std::vector<double> predict_cascade(const CascadeModel& model, const MatrixView& x, int threads) {
  if (x.cols != model.original_width)
    throw DataError("feature width mismatch: model expects " +
                    std::to_string(model.original_width) + " columns, got " +
                    std::to_string(x.cols));
  if (model.layers.empty()) throw DataError("cascade has no layers");
  if (model.best_layer >= model.layers.size()) throw DataError("best_layer out of range");

  const std::size_t n = x.rows;
  Matrix projected(n, model.selected_features.size());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < model.selected_features.size(); ++j)
      projected.at(r, j) = x.at(r, model.selected_features[j]);
  }

  Matrix current;  // layer input; starts as the projection
  MatrixView input = projected.view();
  for (std::size_t t = 0; t <= model.best_layer; ++t) {
    const Layer& layer = model.layers[t];
    if (input.cols != layer.input_width)
      throw DataError("layer " + std::to_string(t) + " input width mismatch");
    const std::size_t l = layer.models.size();
    Matrix class_vectors(n, l * 2);
    std::vector<std::vector<double>> learner_avg(l);
    detail::parallel_for(l, threads, [&](std::size_t j) {
      const auto& folds = layer.models[j];
      std::vector<double> sum(n, 0.0);
      for (const MartModel& m : folds) {
        auto p = predict_proba(m, input, 1);
        for (std::size_t r = 0; r < n; ++r) sum[r] += p[r];
      }
      const double inv = 1.0 / static_cast<double>(folds.size());
      for (std::size_t r = 0; r < n; ++r) sum[r] *= inv;
      learner_avg[j] = std::move(sum);
    });
    for (std::size_t j = 0; j < l; ++j) {
      for (std::size_t r = 0; r < n; ++r) {
        class_vectors.at(r, 2 * j) = 1.0 - learner_avg[j][r];
        class_vectors.at(r, 2 * j + 1) = learner_avg[j][r];
      }
    }
    if (t == model.best_layer) {
      std::vector<double> out(n, 0.0);
      const double inv = 1.0 / static_cast<double>(l);
      for (std::size_t r = 0; r < n; ++r) {
        double sum = 0.0;
        for (std::size_t j = 0; j < l; ++j) sum += class_vectors.at(r, 2 * j + 1);
        out[r] = sum * inv;
      }
      return out;
    }
    current = augment(projected.view(), class_vectors.view());
    input = current.view();
  }
  throw DataError("cascade prediction fell through");  // unreachable
}

}  // namespace cforest
