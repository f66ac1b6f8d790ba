#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <nlohmann/json.hpp>
#include <random>
#include <string>
#include <vector>

#include "cforest/errors.hpp"
#include "cforest/model_io.hpp"
#include "cforest/pipeline.hpp"
#include "cforest/run_config.hpp"
#include "test_util.hpp"

using namespace cforest;
using nlohmann::json;

namespace {

CascadeConfig tiny_cascade(std::uint64_t seed = 5) {
  CascadeConfig cfg;
  cfg.k_folds = 3;
  cfg.learners_per_layer = 2;
  cfg.max_layers = 3;
  cfg.seed = seed;
  MartParams p;
  p.num_trees = 6;
  p.max_depth = 3;
  p.learning_rate = 0.3;
  p.max_bins = 32;
  cfg.learner_params.assign(2, p);
  cfg.selector_params = p;
  cfg.selector_params.feature_subsample = 1.0;
  return cfg;
}

CascadeModel trained_model(std::uint64_t seed = 5) {
  std::mt19937 rng(7100 + seed);
  auto ds = testutil::random_dataset(rng, 150, 4);
  return train_cascade(ds, tiny_cascade(seed));
}

}  // namespace

TEST_CASE("boosted model payloads round-trip bit for bit") {
  std::mt19937 rng(7001);
  auto ds = testutil::random_dataset(rng, 120, 3);
  MartParams p;
  p.num_trees = 10;
  p.max_depth = 3;
  const MartModel model = train_mart(ds, p);

  const std::string text = mart_to_json(model);
  const MartModel back = mart_from_json(text);
  CHECK(mart_to_json(back) == text);
  CHECK(back.base_score == model.base_score);
  CHECK(back.num_features == model.num_features);
  REQUIRE(back.trees.size() == model.trees.size());
  CHECK(predict_margin(back, ds.view()) == predict_margin(model, ds.view()));

  testutil::TempDir tmp;
  const auto path = tmp.file("model.json");
  save_mart(model, path);
  CHECK(testutil::slurp(path) == text);
  const MartModel loaded = load_mart(path);
  CHECK(mart_to_json(loaded) == text);
}

TEST_CASE("boosted model payload rejects structural damage") {
  std::mt19937 rng(7002);
  auto ds = testutil::random_dataset(rng, 100, 3);
  MartParams p;
  p.num_trees = 4;
  const MartModel model = train_mart(ds, p);
  const json base = json::parse(mart_to_json(model));

  CHECK_THROWS_AS(mart_from_json("definitely not json"), DataError);
  CHECK_THROWS_AS(mart_from_json("[1,2,3]"), DataError);

  json missing = base;
  missing.erase("base_score");
  CHECK_THROWS_AS(mart_from_json(missing.dump()), DataError);

  // A split feature at or past num_features cannot be routed.
  json wide = base;
  wide["num_features"] = 1;
  bool has_split_past_zero = false;
  for (const auto& t : wide.at("trees")) {
    for (const auto& n : t.at("nodes")) {
      if (n.contains("feature") && n.at("feature").get<int>() >= 1) has_split_past_zero = true;
    }
  }
  if (has_split_past_zero) CHECK_THROWS_AS(mart_from_json(wide.dump()), DataError);

  json orphan = base;
  auto& nodes = orphan.at("trees").at(0).at("nodes");
  if (nodes.size() > 1 && nodes.at(0).contains("left")) {
    nodes.at(0)["left"] = 10000;  // child index past the node array
    CHECK_THROWS_AS(mart_from_json(orphan.dump()), DataError);
  }

  json negative = base;
  auto& nodes2 = negative.at("trees").at(0).at("nodes");
  if (!nodes2.empty() && nodes2.at(0).contains("feature")) {
    nodes2.at(0)["feature"] = -3;
    CHECK_THROWS_AS(mart_from_json(negative.dump()), DataError);
  }
}

TEST_CASE("cascade model files round-trip and preserve predictions") {
  const CascadeModel model = trained_model();
  std::mt19937 rng(7003);
  const Matrix probe = testutil::random_matrix(rng, 40, 4);

  const std::string text = model_to_json(model);
  const CascadeModel back = model_from_json(text);
  CHECK(model_to_json(back) == text);
  CHECK(back.best_layer == model.best_layer);
  CHECK(back.original_width == model.original_width);
  CHECK(back.selected_features == model.selected_features);
  CHECK(back.metric_history == model.metric_history);
  CHECK(back.config.k_folds == model.config.k_folds);
  CHECK(back.config.seed == model.config.seed);
  REQUIRE(back.layers.size() == model.layers.size());
  CHECK(predict_cascade(back, probe.view()) == predict_cascade(model, probe.view()));

  testutil::TempDir tmp;
  const auto path = tmp.file("cascade.json");
  save_model(model, path);
  CHECK(testutil::slurp(path) == text);
  CHECK(model_to_json(load_model(path)) == text);
  CHECK_THROWS_AS(load_model(tmp.file("absent.json")), IoError);
}

TEST_CASE("cascade model files reject inconsistent metadata") {
  const CascadeModel model = trained_model();
  const json base = json::parse(model_to_json(model));
  REQUIRE(base.at("layers").size() >= 2);

  CHECK_THROWS_AS(model_from_json("nope"), DataError);

  json no_version = base;
  no_version.erase("format_version");
  CHECK_THROWS_WITH_AS(model_from_json(no_version.dump()),
                       doctest::Contains("format_version"), DataError);

  json future = base;
  future["format_version"] = 99;
  CHECK_THROWS_WITH_AS(model_from_json(future.dump()),
                       doctest::Contains("format_version 99"), DataError);

  json short_history = base;
  short_history.at("metric_history").erase(0);
  CHECK_THROWS_WITH_AS(model_from_json(short_history.dump()),
                       doctest::Contains("metric history"), DataError);

  json bad_best = base;
  bad_best["best_layer"] = base.at("layers").size();
  CHECK_THROWS_WITH_AS(model_from_json(bad_best.dump()),
                       doctest::Contains("best_layer out of range"), DataError);

  json not_argmax = base;
  {
    std::vector<double> hist(base.at("layers").size());
    for (std::size_t t = 0; t < hist.size(); ++t) hist[t] = 0.1 * static_cast<double>(t + 1);
    not_argmax["metric_history"] = hist;
    not_argmax["best_layer"] = 0;  // the maximum sits at the back
  }
  CHECK_THROWS_WITH_AS(model_from_json(not_argmax.dump()),
                       doctest::Contains("score maximum"), DataError);

  json late_tie = base;
  {
    std::vector<double> hist(base.at("layers").size(), 0.5);
    late_tie["metric_history"] = hist;
    late_tie["best_layer"] = hist.size() - 1;  // ties must resolve to the earliest
  }
  CHECK_THROWS_WITH_AS(model_from_json(late_tie.dump()),
                       doctest::Contains("tie"), DataError);

  json empty_layers = base;
  empty_layers["layers"] = json::array();
  empty_layers["metric_history"] = json::array();
  empty_layers["best_layer"] = 0;
  CHECK_THROWS_WITH_AS(model_from_json(empty_layers.dump()),
                       doctest::Contains("no layers"), DataError);
}

TEST_CASE("run config parses defaults, overrides, and nested learner params") {
  const RunConfig defaults = RunConfig::from_json_text("{}");
  CHECK(defaults.cascade.k_folds == 5);
  CHECK(defaults.cascade.learners_per_layer == 4);
  CHECK(defaults.weight_mode == "balanced");
  CHECK(defaults.label_column == "label");
  CHECK(defaults.has_header);
  CHECK(defaults.pool_size == 0);
  CHECK(defaults.eval_rates == std::vector<double>{0.0001, 0.001, 0.01});
  CHECK(defaults.cascade.selector_params.feature_subsample == 1.0);

  const std::string text = R"({
    "seed": 9, "k_folds": 3, "learners_per_layer": 2, "stop_metric": "ks",
    "patience": 2, "max_layers": 7, "top_k_features": 5, "threads": 2,
    "mart": {"num_trees": 25, "max_depth": 4, "learning_rate": 0.2, "eps": null},
    "learners": [{"num_trees": 30}, {"lambda": 2.5}],
    "selector": {"num_trees": 11},
    "weight_mode": "column", "weight_column": "w", "label_column": "y",
    "has_header": false, "rates": [0.05, 0.5], "pool_size": 3
  })";
  const RunConfig cfg = RunConfig::from_json_text(text);
  CHECK(cfg.cascade.seed == 9);
  CHECK(cfg.cascade.k_folds == 3);
  CHECK(cfg.cascade.stop_metric == StopMetric::ks);
  CHECK(cfg.cascade.patience == 2);
  CHECK(cfg.cascade.max_layers == 7);
  REQUIRE(cfg.cascade.top_k_features.has_value());
  CHECK(*cfg.cascade.top_k_features == 5);
  CHECK(cfg.cascade.threads == 2);
  REQUIRE(cfg.cascade.learner_params.size() == 2);
  // The learners array overrides the shared mart block per entry.
  CHECK(cfg.cascade.learner_params[0].num_trees == 30);
  CHECK(cfg.cascade.learner_params[0].learning_rate == 0.2);
  CHECK(cfg.cascade.learner_params[1].num_trees == 25);
  CHECK(cfg.cascade.learner_params[1].lambda == 2.5);
  CHECK_FALSE(cfg.cascade.learner_params[0].eps.has_value());
  CHECK(cfg.cascade.selector_params.num_trees == 11);
  CHECK(cfg.cascade.selector_params.feature_subsample == 1.0);
  CHECK(cfg.weight_mode == "column");
  REQUIRE(cfg.weight_column.has_value());
  CHECK(*cfg.weight_column == "w");
  CHECK(cfg.label_column == "y");
  CHECK_FALSE(cfg.has_header);
  CHECK(cfg.eval_rates == std::vector<double>{0.05, 0.5});
  CHECK(cfg.pool_size == 3);

  // Serialization is a fixed point: parse(dump) dumps the same text.
  const std::string dumped = cfg.to_json_text();
  CHECK(RunConfig::from_json_text(dumped).to_json_text() == dumped);
}

TEST_CASE("run config rejects unknown keys, bad types, and bad ranges") {
  CHECK_THROWS_WITH_AS(RunConfig::from_json_text(R"({"cascade": {}})"),
                       doctest::Contains("unknown config key 'cascade'"), ConfigError);
  CHECK_THROWS_WITH_AS(RunConfig::from_json_text(R"({"mart": {"trees": 5}})"),
                       doctest::Contains("unknown config key 'mart.trees'"), ConfigError);
  CHECK_THROWS_WITH_AS(RunConfig::from_json_text(R"({"selector": {"bogus": 1}})"),
                       doctest::Contains("selector.bogus"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json_text(R"({"k_folds": "three"})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json_text(R"({"mart": 7})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json_text(R"({"learners": {}})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json_text("[]"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json_text("{"), ConfigError);

  CHECK_THROWS_AS(RunConfig::from_json_text(R"({"weight_mode": "heavy"})").validate(),
                  ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json_text(R"({"weight_mode": "column"})").validate(),
                  ConfigError);
  CHECK_THROWS_AS(
      RunConfig::from_json_text(R"({"weight_mode": "uniform", "weight_column": "w"})").validate(),
      ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json_text(R"({"rates": []})").validate(), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json_text(R"({"rates": [1.5]})").validate(), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json_text(R"({"pool_size": -1})").validate(), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json_text(R"({"k_folds": 1})").validate(), ConfigError);

  testutil::TempDir tmp;
  CHECK_THROWS_AS(RunConfig::load(tmp.file("missing.json")), IoError);
}

TEST_CASE("checkpointed training reproduces the in-memory cascade exactly") {
  std::mt19937 rng(7200);
  auto ds = testutil::random_dataset(rng, 150, 4);
  const auto cfg = tiny_cascade(11);

  const CascadeModel reference = train_cascade(ds, cfg);
  const std::string ref_text = model_to_json(reference);

  testutil::TempDir ckpt;
  const PipelineResult run = train_cascade_checkpointed(ds, cfg, ckpt.path(), 2);
  CHECK(run.report.all_done());
  CHECK(model_to_json(run.model) == ref_text);

  // A layer's grid is k prep, k*l train, k*l predict, combine, gate.
  const std::size_t per_layer = 3 + 3 * 2 * 2 + 2;
  CHECK(run.report.executed == per_layer * reference.layers.size());
}

TEST_CASE("a partially deleted checkpoint resumes to the identical model") {
  std::mt19937 rng(7201);
  auto ds = testutil::random_dataset(rng, 150, 4);
  const auto cfg = tiny_cascade(13);

  testutil::TempDir ckpt;
  const PipelineResult full = train_cascade_checkpointed(ds, cfg, ckpt.path(), 2);
  const std::string expect = model_to_json(full.model);
  REQUIRE(full.model.layers.size() >= 2);

  // Drop everything the second layer produced and resume.
  std::filesystem::remove_all(ckpt.path() / "L1");
  const PipelineResult resumed = train_cascade_checkpointed(ds, cfg, ckpt.path(), 2);
  CHECK(resumed.report.all_done());
  CHECK(model_to_json(resumed.model) == expect);
  CHECK(resumed.report.executed < full.report.executed);
  CHECK(resumed.report.executed >= 1);

  // A fully recorded checkpoint replays without running anything.
  const PipelineResult replay = train_cascade_checkpointed(ds, cfg, ckpt.path(), 2);
  CHECK(replay.report.executed == 0);
  CHECK(model_to_json(replay.model) == expect);
}
