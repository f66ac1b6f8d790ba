#include "cforest/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cforest/detail/text.hpp"
#include "cforest/errors.hpp"

namespace cforest {

using nlohmann::json;

namespace {

[[noreturn]] void unknown_key(const std::string& scope, const std::string& key) {
  throw ConfigError("unknown config key '" + (scope.empty() ? key : scope + "." + key) + "'");
}

void check_keys(const json& j, const std::string& scope, const std::set<std::string>& allowed) {
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) unknown_key(scope, item.key());
  }
}

template <typename T>
T get_as(const json& j, const std::string& scope, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + (scope.empty() ? key : scope + "." + key) +
                      "' has the wrong type");
  }
}

MartParams parse_mart(const json& j, const std::string& scope, const MartParams& base) {
  static const std::set<std::string> allowed = {
      "num_trees",       "max_depth", "learning_rate",     "lambda", "gamma",
      "min_child_weight", "feature_subsample", "max_bins", "eps",    "seed"};
  if (!j.is_object()) throw ConfigError("config section '" + scope + "' must be an object");
  check_keys(j, scope, allowed);
  MartParams p = base;
  if (j.contains("num_trees")) p.num_trees = get_as<int>(j, scope, "num_trees");
  if (j.contains("max_depth")) p.max_depth = get_as<int>(j, scope, "max_depth");
  if (j.contains("learning_rate")) p.learning_rate = get_as<double>(j, scope, "learning_rate");
  if (j.contains("lambda")) p.lambda = get_as<double>(j, scope, "lambda");
  if (j.contains("gamma")) p.gamma = get_as<double>(j, scope, "gamma");
  if (j.contains("min_child_weight"))
    p.min_child_weight = get_as<double>(j, scope, "min_child_weight");
  if (j.contains("feature_subsample"))
    p.feature_subsample = get_as<double>(j, scope, "feature_subsample");
  if (j.contains("max_bins")) p.max_bins = get_as<int>(j, scope, "max_bins");
  if (j.contains("eps")) {
    if (j.at("eps").is_null()) {
      p.eps.reset();
    } else {
      p.eps = get_as<double>(j, scope, "eps");
    }
  }
  if (j.contains("seed")) p.seed = get_as<std::uint64_t>(j, scope, "seed");
  return p;
}

}  // namespace

void RunConfig::validate() const {
  cascade.validate();
  if (weight_mode != "balanced" && weight_mode != "uniform" && weight_mode != "column")
    throw ConfigError("weight_mode must be 'balanced', 'uniform', or 'column'");
  if (weight_mode == "column" && !weight_column)
    throw ConfigError("weight_mode 'column' requires weight_column");
  if (weight_mode != "column" && weight_column)
    throw ConfigError("weight_column requires weight_mode 'column'");
  if (label_column.empty()) throw ConfigError("label_column must not be empty");
  if (eval_rates.empty()) throw ConfigError("rates must not be empty");
  for (double r : eval_rates) {
    if (!(r > 0.0) || r > 1.0)
      throw ConfigError("rate " + detail::format_double(r) + " outside (0, 1]");
  }
  if (pool_size < 0) throw ConfigError("pool_size must be non-negative");
}

RunConfig RunConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be an object");
  static const std::set<std::string> allowed = {
      "seed",      "k_folds",   "learners_per_layer", "stop_metric",  "patience",
      "max_layers", "top_k_features", "threads",      "mart",         "learners",
      "selector",  "weight_mode", "weight_column",    "label_column", "has_header",
      "rates",     "pool_size"};
  check_keys(j, "", allowed);

  RunConfig cfg;
  CascadeConfig& c = cfg.cascade;
  if (j.contains("seed")) c.seed = get_as<std::uint64_t>(j, "", "seed");
  if (j.contains("k_folds")) c.k_folds = get_as<int>(j, "", "k_folds");
  if (j.contains("learners_per_layer"))
    c.learners_per_layer = get_as<int>(j, "", "learners_per_layer");
  if (j.contains("stop_metric"))
    c.stop_metric = stop_metric_from_string(get_as<std::string>(j, "", "stop_metric"));
  if (j.contains("patience")) c.patience = get_as<int>(j, "", "patience");
  if (j.contains("max_layers")) c.max_layers = get_as<int>(j, "", "max_layers");
  if (j.contains("top_k_features") && !j.at("top_k_features").is_null())
    c.top_k_features = get_as<int>(j, "", "top_k_features");
  if (j.contains("threads")) c.threads = get_as<int>(j, "", "threads");

  MartParams base;
  base.seed = c.seed;
  if (j.contains("mart")) base = parse_mart(j.at("mart"), "mart", base);

  if (j.contains("learners")) {
    const json& arr = j.at("learners");
    if (!arr.is_array()) throw ConfigError("config key 'learners' must be an array");
    c.learner_params.clear();
    for (std::size_t i = 0; i < arr.size(); ++i)
      c.learner_params.push_back(
          parse_mart(arr[i], "learners[" + std::to_string(i) + "]", base));
  } else {
    c.learner_params.assign(static_cast<std::size_t>(c.learners_per_layer), base);
  }

  MartParams selector_base = base;
  selector_base.feature_subsample = 1.0;  // ranking sees every feature
  c.selector_params =
      j.contains("selector") ? parse_mart(j.at("selector"), "selector", selector_base)
                             : selector_base;

  if (j.contains("weight_mode")) cfg.weight_mode = get_as<std::string>(j, "", "weight_mode");
  if (j.contains("weight_column"))
    cfg.weight_column = get_as<std::string>(j, "", "weight_column");
  if (j.contains("label_column")) cfg.label_column = get_as<std::string>(j, "", "label_column");
  if (j.contains("has_header")) cfg.has_header = get_as<bool>(j, "", "has_header");
  if (j.contains("rates")) cfg.eval_rates = get_as<std::vector<double>>(j, "", "rates");
  if (j.contains("pool_size")) cfg.pool_size = get_as<int>(j, "", "pool_size");

  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

std::string RunConfig::to_json_text() const {
  json j;
  j["seed"] = cascade.seed;
  j["k_folds"] = cascade.k_folds;
  j["learners_per_layer"] = cascade.learners_per_layer;
  j["stop_metric"] = to_string(cascade.stop_metric);
  j["patience"] = cascade.patience;
  j["max_layers"] = cascade.max_layers;
  if (cascade.top_k_features) {
    j["top_k_features"] = *cascade.top_k_features;
  } else {
    j["top_k_features"] = nullptr;
  }
  j["threads"] = cascade.threads;
  auto emit_mart = [](const MartParams& p) {
    json m;
    m["num_trees"] = p.num_trees;
    m["max_depth"] = p.max_depth;
    m["learning_rate"] = p.learning_rate;
    m["lambda"] = p.lambda;
    m["gamma"] = p.gamma;
    m["min_child_weight"] = p.min_child_weight;
    m["feature_subsample"] = p.feature_subsample;
    m["max_bins"] = p.max_bins;
    if (p.eps) {
      m["eps"] = *p.eps;
    } else {
      m["eps"] = nullptr;
    }
    m["seed"] = p.seed;
    return m;
  };
  json learners = json::array();
  for (const MartParams& p : cascade.resolved_learners()) learners.push_back(emit_mart(p));
  j["learners"] = std::move(learners);
  j["selector"] = emit_mart(cascade.selector_params);
  j["weight_mode"] = weight_mode;
  if (weight_column) j["weight_column"] = *weight_column;
  j["label_column"] = label_column;
  j["has_header"] = has_header;
  j["rates"] = eval_rates;
  j["pool_size"] = pool_size;
  return j.dump(2) + "\n";
}

}  // namespace cforest
