#include "cforest/model_io.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cforest/errors.hpp"

namespace cforest {

using nlohmann::json;

namespace {

json params_to_json(const MartParams& p) {
  json j;
  j["num_trees"] = p.num_trees;
  j["max_depth"] = p.max_depth;
  j["learning_rate"] = p.learning_rate;
  j["lambda"] = p.lambda;
  j["gamma"] = p.gamma;
  j["min_child_weight"] = p.min_child_weight;
  j["feature_subsample"] = p.feature_subsample;
  j["max_bins"] = p.max_bins;
  if (p.eps) {
    j["eps"] = *p.eps;
  } else {
    j["eps"] = nullptr;
  }
  j["seed"] = p.seed;
  return j;
}

MartParams params_from_json(const json& j) {
  MartParams p;
  p.num_trees = j.at("num_trees").get<int>();
  p.max_depth = j.at("max_depth").get<int>();
  p.learning_rate = j.at("learning_rate").get<double>();
  p.lambda = j.at("lambda").get<double>();
  p.gamma = j.at("gamma").get<double>();
  p.min_child_weight = j.at("min_child_weight").get<double>();
  p.feature_subsample = j.at("feature_subsample").get<double>();
  p.max_bins = j.at("max_bins").get<int>();
  if (j.contains("eps") && !j.at("eps").is_null()) p.eps = j.at("eps").get<double>();
  p.seed = j.at("seed").get<std::uint64_t>();
  return p;
}

json tree_to_json(const Tree& tree) {
  json nodes = json::array();
  for (const TreeNode& nd : tree.nodes) {
    json n;
    if (nd.is_leaf()) {
      n["value"] = nd.value;
    } else {
      n["feature"] = nd.feature;
      n["threshold"] = nd.threshold;
      n["gain"] = nd.gain;
      n["left"] = nd.left;
      n["right"] = nd.right;
    }
    nodes.push_back(std::move(n));
  }
  return json{{"nodes", std::move(nodes)}};
}

Tree tree_from_json(const json& j) {
  Tree tree;
  for (const json& n : j.at("nodes")) {
    TreeNode nd;
    if (n.contains("value")) {
      nd.value = n.at("value").get<double>();
    } else {
      nd.feature = n.at("feature").get<std::int32_t>();
      if (nd.feature < 0) throw DataError("internal node with negative feature");
      nd.threshold = n.at("threshold").get<double>();
      nd.gain = n.at("gain").get<double>();
      nd.left = n.at("left").get<std::int32_t>();
      nd.right = n.at("right").get<std::int32_t>();
    }
    tree.nodes.push_back(nd);
  }
  validate_tree(tree);
  return tree;
}

json mart_to_json_obj(const MartModel& m) {
  json j;
  j["base_score"] = m.base_score;
  j["num_features"] = m.num_features;
  j["params"] = params_to_json(m.params);
  json trees = json::array();
  for (const Tree& t : m.trees) trees.push_back(tree_to_json(t));
  j["trees"] = std::move(trees);
  return j;
}

MartModel mart_from_json_obj(const json& j) {
  MartModel m;
  m.base_score = j.at("base_score").get<double>();
  m.num_features = j.at("num_features").get<std::size_t>();
  m.params = params_from_json(j.at("params"));
  for (const json& t : j.at("trees")) {
    Tree tree = tree_from_json(t);
    for (const TreeNode& nd : tree.nodes) {
      if (!nd.is_leaf() && static_cast<std::size_t>(nd.feature) >= m.num_features)
        throw DataError("tree split feature out of range");
    }
    m.trees.push_back(std::move(tree));
  }
  return m;
}

json config_to_json(const CascadeConfig& c) {
  json j;
  j["k_folds"] = c.k_folds;
  j["learners_per_layer"] = c.learners_per_layer;
  json learners = json::array();
  for (const MartParams& p : c.learner_params) learners.push_back(params_to_json(p));
  j["learner_params"] = std::move(learners);
  j["selector_params"] = params_to_json(c.selector_params);
  j["stop_metric"] = to_string(c.stop_metric);
  j["patience"] = c.patience;
  j["max_layers"] = c.max_layers;
  if (c.top_k_features) {
    j["top_k_features"] = *c.top_k_features;
  } else {
    j["top_k_features"] = nullptr;
  }
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  return j;
}

CascadeConfig config_from_json(const json& j) {
  CascadeConfig c;
  c.k_folds = j.at("k_folds").get<int>();
  c.learners_per_layer = j.at("learners_per_layer").get<int>();
  c.learner_params.clear();
  for (const json& p : j.at("learner_params")) c.learner_params.push_back(params_from_json(p));
  c.selector_params = params_from_json(j.at("selector_params"));
  c.stop_metric = stop_metric_from_string(j.at("stop_metric").get<std::string>());
  c.patience = j.at("patience").get<int>();
  c.max_layers = j.at("max_layers").get<int>();
  if (j.contains("top_k_features") && !j.at("top_k_features").is_null())
    c.top_k_features = j.at("top_k_features").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.threads = j.at("threads").get<int>();
  return c;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

std::string model_to_json(const CascadeModel& model) {
  json j;
  j["format_version"] = kModelFormatVersion;
  j["config"] = config_to_json(model.config);
  j["original_width"] = model.original_width;
  j["selected_features"] = model.selected_features;
  j["best_layer"] = model.best_layer;
  j["metric_history"] = model.metric_history;
  json layers = json::array();
  for (const Layer& layer : model.layers) {
    json lj;
    lj["validation_score"] = layer.validation_score;
    lj["input_width"] = layer.input_width;
    json grid = json::array();
    for (const auto& folds : layer.models) {
      json row = json::array();
      for (const MartModel& m : folds) row.push_back(mart_to_json_obj(m));
      grid.push_back(std::move(row));
    }
    lj["learners"] = std::move(grid);
    layers.push_back(std::move(lj));
  }
  j["layers"] = std::move(layers);
  return j.dump(2) + "\n";
}

CascadeModel model_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (!j.contains("format_version") || !j.at("format_version").is_number_integer())
      throw DataError("model file missing format_version");
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion)
      throw DataError("unsupported model format_version " + std::to_string(version));

    CascadeModel model;
    model.config = config_from_json(j.at("config"));
    model.original_width = j.at("original_width").get<std::size_t>();
    model.selected_features = j.at("selected_features").get<std::vector<std::size_t>>();
    model.best_layer = j.at("best_layer").get<std::size_t>();
    model.metric_history = j.at("metric_history").get<std::vector<double>>();
    for (const json& lj : j.at("layers")) {
      Layer layer;
      layer.validation_score = lj.at("validation_score").get<double>();
      layer.input_width = lj.at("input_width").get<std::size_t>();
      for (const json& row : lj.at("learners")) {
        std::vector<MartModel> folds;
        for (const json& m : row) folds.push_back(mart_from_json_obj(m));
        layer.models.push_back(std::move(folds));
      }
      model.layers.push_back(std::move(layer));
    }

    if (model.layers.empty()) throw DataError("model has no layers");
    if (model.metric_history.size() != model.layers.size())
      throw DataError("metric history does not match the layer count");
    if (model.best_layer >= model.layers.size()) throw DataError("best_layer out of range");
    for (std::size_t t = 0; t < model.metric_history.size(); ++t) {
      if (model.metric_history[t] > model.metric_history[model.best_layer])
        throw DataError("best_layer does not achieve the score maximum");
      if (model.metric_history[t] == model.metric_history[model.best_layer] &&
          t < model.best_layer)
        throw DataError("best_layer tie not resolved to the earliest layer");
    }
    return model;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  }
}

void save_model(const CascadeModel& model, const std::filesystem::path& path) {
  write_file(path, model_to_json(model));
}

CascadeModel load_model(const std::filesystem::path& path) {
  return model_from_json(read_file(path));
}

std::string mart_to_json(const MartModel& model) {
  return mart_to_json_obj(model).dump() + "\n";
}

MartModel mart_from_json(const std::string& text) {
  try {
    return mart_from_json_obj(json::parse(text));
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model payload: ") + e.what());
  }
}

void save_mart(const MartModel& model, const std::filesystem::path& path) {
  write_file(path, mart_to_json(model));
}

MartModel load_mart(const std::filesystem::path& path) {
  return mart_from_json(read_file(path));
}

}  // namespace cforest
