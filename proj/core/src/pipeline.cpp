#include "cforest/pipeline.hpp"

#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <sstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "cforest/detail/text.hpp"
#include "cforest/errors.hpp"
#include "cforest/model_io.hpp"

namespace cforest {

using nlohmann::json;

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

void write_rows(const std::filesystem::path& path, const std::vector<std::size_t>& rows) {
  std::string text;
  for (auto r : rows) {
    text += std::to_string(r);
    text += '\n';
  }
  write_file(path, text);
}

std::vector<std::size_t> read_rows(const std::filesystem::path& path) {
  std::vector<std::size_t> rows;
  const std::string text = read_file(path);
  for (auto line : detail::split(text, '\n')) {
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    std::size_t v = 0;
    if (!detail::parse_size(line, v)) throw DataError("bad row index in " + path.string());
    rows.push_back(v);
  }
  return rows;
}

void write_values(const std::filesystem::path& path, const std::vector<double>& values) {
  std::string text;
  for (double v : values) {
    text += detail::format_double(v);
    text += '\n';
  }
  write_file(path, text);
}

std::vector<double> read_values(const std::filesystem::path& path) {
  std::vector<double> values;
  const std::string text = read_file(path);
  for (auto line : detail::split(text, '\n')) {
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    double v = 0.0;
    if (!detail::parse_double(line, v)) throw DataError("bad value in " + path.string());
    values.push_back(v);
  }
  return values;
}

void write_oof(const std::filesystem::path& path, const Matrix& oof) {
  std::string text;
  for (std::size_t r = 0; r < oof.rows(); ++r) {
    for (std::size_t c = 0; c < oof.cols(); ++c) {
      if (c) text += ',';
      text += detail::format_double(oof.at(r, c));
    }
    text += '\n';
  }
  write_file(path, text);
}

Matrix read_oof(const std::filesystem::path& path, std::size_t rows, std::size_t cols) {
  Matrix out(rows, cols);
  const std::string text = read_file(path);
  std::size_t r = 0;
  for (auto line : detail::split(text, '\n')) {
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    if (r >= rows) throw DataError("too many rows in " + path.string());
    auto cells = detail::split(line, ',');
    if (cells.size() != cols) throw DataError("bad column count in " + path.string());
    for (std::size_t c = 0; c < cols; ++c) {
      if (!detail::parse_double(cells[c], out.at(r, c)))
        throw DataError("bad value in " + path.string());
    }
    ++r;
  }
  if (r != rows) throw DataError("missing rows in " + path.string());
  return out;
}

struct GateState {
  int layer = -1;
  std::vector<double> history;
  std::size_t best_layer = 0;
  bool stop = false;
};

GateState read_gate_state(const std::filesystem::path& path) {
  GateState s;
  try {
    const json j = json::parse(read_file(path));
    s.layer = j.at("layer").get<int>();
    s.history = j.at("history").get<std::vector<double>>();
    s.best_layer = j.at("best_layer").get<std::size_t>();
    s.stop = j.at("stop").get<bool>();
  } catch (const json::exception& e) {
    throw DataError("malformed gate state " + path.string() + ": " + e.what());
  }
  return s;
}

void write_gate_state(const std::filesystem::path& path, const GateState& s) {
  json j;
  j["layer"] = s.layer;
  j["history"] = s.history;
  j["best_layer"] = s.best_layer;
  j["stop"] = s.stop;
  write_file(path, j.dump() + "\n");
}

// Everything the job runners share. Layer inputs are derived lazily from the
// previous layer's recorded class vectors and cached.
struct RunContext {
  const Dataset* data = nullptr;  // after column selection
  CascadeConfig config;
  FoldPlan plan;
  std::vector<MartParams> learners;
  Checkpoint ck;

  std::mutex mu;
  std::map<int, std::shared_ptr<const Matrix>> inputs;

  MatrixView input_for(int layer) {
    if (layer == 0) return data->view();
    std::lock_guard<std::mutex> lock(mu);
    auto it = inputs.find(layer);
    if (it == inputs.end()) {
      const auto oof_path = ck.out_dir(job_ids::combine(layer - 1)) / "oof.csv";
      const Matrix oof = read_oof(oof_path, data->rows(),
                                  static_cast<std::size_t>(config.learners_per_layer) * 2);
      auto built = std::make_shared<Matrix>(augment(data->view(), oof.view()));
      it = inputs.emplace(layer, std::move(built)).first;
    }
    return it->second->view();
  }
};

JobResult run_fold_prep(RunContext& ctx, const JobNode& node) {
  const auto dir = ctx.ck.out_dir(node.id);
  std::filesystem::create_directories(dir);
  write_rows(dir / "train_rows.txt", ctx.plan.rows_outside(node.params.fold));
  write_rows(dir / "valid_rows.txt", ctx.plan.rows_in(node.params.fold));
  return {};
}

JobResult run_train(RunContext& ctx, const JobNode& node) {
  const int t = node.params.layer;
  const int j = node.params.learner;
  const int f = node.params.fold;
  const auto rows =
      read_rows(ctx.ck.out_dir(job_ids::fold_prep(t, f)) / "train_rows.txt");
  MartParams params = ctx.learners[j];
  params.seed = cascade_model_seed(ctx.config, t, j, f);
  const MartModel model =
      train_mart(ctx.input_for(t), ctx.data->labels(), ctx.data->weights(), rows, params, 1);
  const auto dir = ctx.ck.out_dir(node.id);
  std::filesystem::create_directories(dir);
  save_mart(model, dir / "model.json");
  return {};
}

JobResult run_predict(RunContext& ctx, const JobNode& node) {
  const int t = node.params.layer;
  const int j = node.params.learner;
  const int f = node.params.fold;
  const auto rows =
      read_rows(ctx.ck.out_dir(job_ids::fold_prep(t, f)) / "valid_rows.txt");
  const MartModel model = load_mart(ctx.ck.out_dir(job_ids::train(t, j, f)) / "model.json");
  const auto preds = predict_proba(model, ctx.input_for(t), rows, 1);
  const auto dir = ctx.ck.out_dir(node.id);
  std::filesystem::create_directories(dir);
  write_values(dir / "pred.csv", preds);
  return {};
}

JobResult run_combine(RunContext& ctx, const JobNode& node) {
  const int t = node.params.layer;
  const int k = ctx.config.k_folds;
  const int l = ctx.config.learners_per_layer;
  Matrix oof(ctx.data->rows(), static_cast<std::size_t>(l) * 2);
  for (int f = 0; f < k; ++f) {
    const auto rows =
        read_rows(ctx.ck.out_dir(job_ids::fold_prep(t, f)) / "valid_rows.txt");
    for (int j = 0; j < l; ++j) {
      const auto preds = read_values(ctx.ck.out_dir(job_ids::predict(t, j, f)) / "pred.csv");
      if (preds.size() != rows.size())
        throw DataError("prediction count mismatch for " + job_ids::predict(t, j, f));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        oof.at(rows[i], 2 * j) = 1.0 - preds[i];
        oof.at(rows[i], 2 * j + 1) = preds[i];
      }
    }
  }
  const auto dir = ctx.ck.out_dir(node.id);
  std::filesystem::create_directories(dir);
  write_oof(dir / "oof.csv", oof);
  return {};
}

JobResult run_gate(RunContext& ctx, const JobNode& node) {
  const int t = node.params.layer;
  const int l = ctx.config.learners_per_layer;
  const std::size_t n = ctx.data->rows();
  const Matrix oof =
      read_oof(ctx.ck.out_dir(job_ids::combine(t)) / "oof.csv", n, static_cast<std::size_t>(l) * 2);

  std::vector<double> avg(n, 0.0);
  const double inv = 1.0 / static_cast<double>(l);
  for (std::size_t r = 0; r < n; ++r) {
    double sum = 0.0;
    for (int j = 0; j < l; ++j) sum += oof.at(r, 2 * j + 1);
    avg[r] = sum * inv;
  }
  const double score = evaluate_stop_metric(ctx.config.stop_metric, avg, ctx.data->labels());

  GateState state;
  state.layer = t;
  if (t > 0) {
    const GateState prev =
        read_gate_state(ctx.ck.out_dir(job_ids::gate(t - 1)) / "state.json");
    state.history = prev.history;
  }
  state.history.push_back(score);

  EarlyStop stop(ctx.config.patience);
  bool stopped = false;
  for (double s : state.history) stopped = stop.observe(s);
  state.best_layer = static_cast<std::size_t>(stop.best_index());
  state.stop = stopped;

  const auto dir = ctx.ck.out_dir(node.id);
  std::filesystem::create_directories(dir);
  write_gate_state(dir / "state.json", state);

  JobResult result;
  if (!stopped && t + 1 < ctx.config.max_layers) {
    result.append = layer_subgraph_nodes(t + 1, ctx.config.k_folds, l);
    for (auto& next : result.append) {
      if (next.kind == JobKind::fold_prep) next.deps.push_back(node.id);
    }
  }
  return result;
}

}  // namespace

PipelineResult train_cascade_checkpointed(const Dataset& ds, const CascadeConfig& config,
                                          const std::filesystem::path& checkpoint_dir,
                                          int pool_size) {
  config.validate();
  if (pool_size < 1) throw ConfigError("pool_size must be at least 1");

  CascadeModel model;
  model.config = config;
  model.original_width = ds.cols();

  // Column selection runs ahead of the job graph; it is deterministic, so a
  // resumed run recomputes the identical projection.
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

  RunContext ctx;
  ctx.data = working;
  ctx.config = config;
  ctx.plan = cascade_fold_plan(*working, config);
  ctx.learners = config.resolved_learners();
  ctx.ck = Checkpoint{checkpoint_dir};

  const int k = config.k_folds;
  const int l = config.learners_per_layer;
  JobGraph graph = build_layer_graph(0, k, l);
  // Gates already completed in a previous run can no longer append their next
  // layer (they are skipped), so extend the graph from their recorded
  // decisions up front.
  for (int t = 0; t + 1 < config.max_layers; ++t) {
    if (!ctx.ck.is_done(job_ids::gate(t))) break;
    const GateState state = read_gate_state(ctx.ck.out_dir(job_ids::gate(t)) / "state.json");
    if (state.stop) break;
    append_layer_graph(graph, t + 1, k, l);
  }

  JobRunner runner = [&ctx](const JobNode& node, const Checkpoint&) -> JobResult {
    switch (node.kind) {
      case JobKind::fold_prep: return run_fold_prep(ctx, node);
      case JobKind::train: return run_train(ctx, node);
      case JobKind::predict: return run_predict(ctx, node);
      case JobKind::combine: return run_combine(ctx, node);
      case JobKind::evaluate_gate: return run_gate(ctx, node);
    }
    return {false, "unknown job kind", {}};
  };

  PipelineResult result;
  result.report = resume(graph, ctx.ck, pool_size, runner);
  if (!result.report.all_done()) {
    std::string detail;
    for (const auto& [id, err] : result.report.errors) {
      detail += "; " + id + ": " + err;
    }
    throw DataError("cascade run incomplete" + detail);
  }

  // The deepest gate holds the full score history and the stop decision.
  int last_layer = 0;
  while (graph.contains(job_ids::gate(last_layer + 1))) ++last_layer;
  const GateState final_state =
      read_gate_state(ctx.ck.out_dir(job_ids::gate(last_layer)) / "state.json");

  model.metric_history = final_state.history;
  model.best_layer = final_state.best_layer;
  const std::size_t d_sel = working->cols();
  for (int t = 0; t <= last_layer; ++t) {
    Layer layer;
    layer.validation_score = final_state.history[t];
    layer.input_width = t == 0 ? d_sel : d_sel + static_cast<std::size_t>(l) * 2;
    layer.models.assign(l, std::vector<MartModel>(k));
    for (int j = 0; j < l; ++j) {
      for (int f = 0; f < k; ++f) {
        layer.models[j][f] =
            load_mart(ctx.ck.out_dir(job_ids::train(t, j, f)) / "model.json");
      }
    }
    model.layers.push_back(std::move(layer));
  }
  result.model = std::move(model);
  return result;
}

}  // namespace cforest
