// cforest: train, inspect, and evaluate stacked boosted-forest classifiers
// from the command line.
//
// Exit codes: 0 success, 1 runtime or data failure, 2 usage or config error.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cforest/cascade.hpp"
#include "cforest/dataset.hpp"
#include "cforest/detail/parallel.hpp"
#include "cforest/detail/text.hpp"
#include "cforest/errors.hpp"
#include "cforest/metrics.hpp"
#include "cforest/model_io.hpp"
#include "cforest/pipeline.hpp"
#include "cforest/run_config.hpp"

#include <nlohmann/json.hpp>

namespace {

using namespace cforest;

struct CommonDataFlags {
  std::string label_column;
  bool no_header = false;
};

RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return RunConfig{};
  return RunConfig::load(path);
}

Dataset load_training_data(const std::string& path, const RunConfig& cfg,
                           const CommonDataFlags& flags) {
  const bool has_header = flags.no_header ? false : cfg.has_header;
  const std::string label = flags.label_column.empty() ? cfg.label_column : flags.label_column;
  std::optional<ColumnRef> weight;
  if (cfg.weight_mode == "column") weight = ColumnRef::parse(*cfg.weight_column);
  Dataset ds = load_csv(path, has_header, ColumnRef::parse(label), weight);
  if (cfg.weight_mode == "balanced")
    ds = std::move(ds).with_weights(balanced_weights(ds.labels()));
  return ds;
}

void write_scores_csv(const std::filesystem::path& path, const std::vector<double>& scores) {
  std::string text = "score\n";
  for (double s : scores) {
    text += detail::format_double(s);
    text += '\n';
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<double> read_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<double> scores;
  std::string line;
  bool first = true;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first) {
      first = false;
      if (line != "score")
        throw DataError(path.string() + ": expected header 'score', got '" + line + "'");
      continue;
    }
    if (line.empty()) continue;
    double v = 0.0;
    if (!detail::parse_double(line, v))
      throw DataError(path.string() + ": non-numeric score at row " + std::to_string(row));
    scores.push_back(v);
  }
  if (scores.empty()) throw DataError(path.string() + ": no scores");
  return scores;
}

int cmd_gen_data(const std::string& out, std::size_t rows, std::size_t cols,
                 std::size_t informative, double pos_rate, std::uint64_t seed) {
  Dataset ds = synth_imbalanced(rows, cols, informative, pos_rate, seed);
  write_csv(ds, out);
  std::cout << "wrote " << ds.rows() << " rows x " << ds.cols() << " features ("
            << ds.positives() << " positive) to " << out << "\n";
  return 0;
}

int cmd_select(const std::string& data_path, const std::string& config_path, int top_k,
               const std::string& apply_path, const std::string& out_data,
               const std::string& out_indices, const CommonDataFlags& flags) {
  RunConfig cfg = load_run_config(config_path);
  Dataset ds = load_training_data(data_path, cfg, flags);

  std::vector<std::size_t> keep;
  if (!apply_path.empty()) {
    nlohmann::json j;
    try {
      std::ifstream in(apply_path, std::ios::binary);
      if (!in) throw IoError("cannot open " + apply_path);
      in >> j;
      keep = j.at("selected_features").get<std::vector<std::size_t>>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed selection file " + apply_path + ": " + e.what());
    }
    ds = ds.select_columns(keep);
  } else {
    auto [projected, idx] =
        select_features(ds, cfg.cascade.selector_params, static_cast<std::size_t>(top_k),
                        cfg.cascade.threads);
    keep = std::move(idx);
    ds = std::move(projected);
    if (!out_indices.empty()) {
      nlohmann::json j;
      j["selected_features"] = keep;
      std::ofstream out(out_indices, std::ios::binary);
      if (!out) throw IoError("cannot write " + out_indices);
      out << j.dump(2) << "\n";
      if (!out) throw IoError("write failed for " + out_indices);
    }
  }
  write_csv(ds, out_data);
  std::cout << "kept " << keep.size() << " columns, wrote " << out_data << "\n";
  return 0;
}

int cmd_train(const std::string& data_path, const std::string& config_path,
              const std::string& model_path, const std::string& checkpoint_dir,
              const CommonDataFlags& flags) {
  RunConfig cfg = load_run_config(config_path);
  Dataset ds = load_training_data(data_path, cfg, flags);

  CascadeModel model;
  if (checkpoint_dir.empty()) {
    model = train_cascade(ds, cfg.cascade);
  } else {
    const int pool =
        cfg.pool_size > 0 ? cfg.pool_size : detail::hardware_threads();
    model = train_cascade_checkpointed(ds, cfg.cascade, checkpoint_dir, pool).model;
  }
  save_model(model, model_path);

  std::cout << "trained " << model.layers.size() << " layer(s); best layer " << model.best_layer
            << " with " << to_string(model.config.stop_metric) << " "
            << detail::format_double(model.metric_history[model.best_layer]) << "\n";
  for (std::size_t t = 0; t < model.metric_history.size(); ++t) {
    std::cout << "layer " << t << " " << to_string(model.config.stop_metric) << " "
              << detail::format_double(model.metric_history[t]) << "\n";
  }
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& data_path,
                const std::string& out_path, const std::string& drop_column, bool no_header) {
  const CascadeModel model = load_model(model_path);
  std::optional<ColumnRef> drop;
  if (!drop_column.empty()) drop = ColumnRef::parse(drop_column);
  auto [x, names] = load_csv_matrix(data_path, !no_header, drop);
  const auto scores = predict_cascade(model, x.view(), detail::hardware_threads());
  write_scores_csv(out_path, scores);
  std::cout << "scored " << scores.size() << " rows to " << out_path << "\n";
  return 0;
}

int cmd_eval(const std::string& scores_path, const std::string& labels_path,
             const std::string& label_column, bool no_header, std::vector<double> rates,
             double threshold, const std::string& pr_out) {
  const auto scores = read_scores_csv(scores_path);
  Dataset labels_ds =
      load_csv(labels_path, !no_header, ColumnRef::parse(label_column));
  const auto& labels = labels_ds.labels();
  if (scores.size() != labels.size())
    throw DataError("score count " + std::to_string(scores.size()) +
                    " does not match label count " + std::to_string(labels.size()));
  if (rates.empty()) rates = {0.0001, 0.001, 0.01};
  for (double r : rates) {
    if (!(r > 0.0) || r > 1.0) throw ConfigError("rate must lie in (0, 1]");
  }

  char buf[64];
  auto print_metric = [&](const std::string& name, double value) {
    std::snprintf(buf, sizeof(buf), "%.6f", value);
    std::cout << name << " " << buf << "\n";
  };
  print_metric("auc", auc(scores, labels));
  print_metric("f1", f1(scores, labels, threshold));
  print_metric("ks", ks(scores, labels));
  for (double r : rates) {
    std::snprintf(buf, sizeof(buf), "recall@%g", r);
    print_metric(buf, recall_at_rate(scores, labels, r));
  }
  if (!pr_out.empty()) {
    write_pr_csv(pr_curve(scores, labels), pr_out);
    std::cout << "wrote precision-recall curve to " << pr_out << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stacked boosted-forest training and evaluation"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic imbalanced dataset");
  std::string gen_out;
  std::size_t gen_rows = 10000, gen_cols = 50, gen_informative = 10;
  double gen_pos_rate = 0.01;
  std::uint64_t gen_seed = 0;
  gen->add_option("--out", gen_out, "output CSV path")->required();
  gen->add_option("--rows", gen_rows, "row count")->required();
  gen->add_option("--cols", gen_cols, "feature count")->required();
  gen->add_option("--informative", gen_informative, "informative feature count");
  gen->add_option("--pos-rate", gen_pos_rate, "positive fraction");
  gen->add_option("--seed", gen_seed, "generator seed");

  // select
  auto* sel = app.add_subcommand("select", "rank features by importance and project columns");
  std::string sel_data, sel_config, sel_apply, sel_out_data, sel_out_indices;
  int sel_top_k = 0;
  CommonDataFlags sel_flags;
  sel->add_option("--data", sel_data, "input CSV")->required();
  sel->add_option("--config", sel_config, "run config JSON");
  sel->add_option("--top-k", sel_top_k, "number of columns to keep");
  sel->add_option("--apply", sel_apply, "reuse a saved selection instead of ranking");
  sel->add_option("--out-data", sel_out_data, "projected CSV path")->required();
  sel->add_option("--out-indices", sel_out_indices, "selection JSON path");
  sel->add_option("--label-column", sel_flags.label_column, "label column name or index");
  sel->add_flag("--no-header", sel_flags.no_header, "input has no header row");

  // train
  auto* train = app.add_subcommand("train", "train a cascade model");
  std::string train_data, train_config, train_model, train_checkpoint;
  CommonDataFlags train_flags;
  train->add_option("--data", train_data, "training CSV")->required();
  train->add_option("--config", train_config, "run config JSON");
  train->add_option("--model", train_model, "output model JSON")->required();
  train->add_option("--checkpoint", train_checkpoint,
                    "checkpoint directory (resumable scheduled run)");
  train->add_option("--label-column", train_flags.label_column, "label column name or index");
  train->add_flag("--no-header", train_flags.no_header, "input has no header row");

  // predict
  auto* pred = app.add_subcommand("predict", "score rows with a trained model");
  std::string pred_model, pred_data, pred_out, pred_drop;
  bool pred_no_header = false;
  pred->add_option("--model", pred_model, "model JSON")->required();
  pred->add_option("--data", pred_data, "input CSV of feature rows")->required();
  pred->add_option("--out", pred_out, "output score CSV")->required();
  pred->add_option("--drop-column", pred_drop, "column to drop before scoring (e.g. a label)");
  pred->add_flag("--no-header", pred_no_header, "input has no header row");

  // eval
  auto* ev = app.add_subcommand("eval", "compute ranking metrics for saved scores");
  std::string ev_scores, ev_labels, ev_label_column = "label", ev_pr_out;
  bool ev_no_header = false;
  std::vector<double> ev_rates;
  double ev_threshold = 0.5;
  ev->add_option("--scores", ev_scores, "score CSV (header 'score')")->required();
  ev->add_option("--labels", ev_labels, "CSV holding the label column")->required();
  ev->add_option("--label-column", ev_label_column, "label column name or index");
  ev->add_flag("--no-header", ev_no_header, "label CSV has no header row");
  ev->add_option("--rate,--rates", ev_rates,
                 "interrupt rate for recall@rate (repeatable or comma-separated)")
      ->delimiter(',');
  ev->add_option("--threshold", ev_threshold, "decision threshold for f1");
  ev->add_option("--pr-out", ev_pr_out, "write the precision-recall curve CSV here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed())
      return cmd_gen_data(gen_out, gen_rows, gen_cols, gen_informative, gen_pos_rate, gen_seed);
    if (sel->parsed()) {
      if (sel_apply.empty() && sel_top_k < 1)
        throw ConfigError("select needs --top-k (or --apply with a saved selection)");
      if (!sel_apply.empty() && sel_top_k > 0)
        throw ConfigError("--top-k and --apply are mutually exclusive");
      return cmd_select(sel_data, sel_config, sel_top_k, sel_apply, sel_out_data,
                        sel_out_indices, sel_flags);
    }
    if (train->parsed())
      return cmd_train(train_data, train_config, train_model, train_checkpoint, train_flags);
    if (pred->parsed())
      return cmd_predict(pred_model, pred_data, pred_out, pred_drop, pred_no_header);
    if (ev->parsed())
      return cmd_eval(ev_scores, ev_labels, ev_label_column, ev_no_header, ev_rates,
                      ev_threshold, ev_pr_out);
    std::cerr << "no subcommand\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
