#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <tuple>

#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string output;  // stdout and stderr combined
};

CliResult run_cli(const std::string& args, const fs::path& scratch) {
  static int call = 0;
  const fs::path log = scratch / ("cli_" + std::to_string(call++) + ".log");
  const std::string cmd =
      std::string(CFOREST_CLI_PATH) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  CliResult res;
  if (WIFEXITED(status)) res.code = WEXITSTATUS(status);
  res.output = testutil::slurp(log);
  return res;
}

void write_config(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

const std::string kSmallConfig = R"({
  "seed": 3, "k_folds": 3, "learners_per_layer": 2, "max_layers": 2,
  "mart": {"num_trees": 5, "max_depth": 3, "max_bins": 32},
  "pool_size": 2
})";

double printed_metric(const std::string& output, const std::string& name) {
  const std::size_t at = output.find(name + " ");
  REQUIRE(at != std::string::npos);
  return std::stod(output.substr(at + name.size() + 1));
}

}  // namespace

TEST_CASE("generate, train, predict, and eval run end to end") {
  testutil::TempDir tmp;
  const auto data = tmp.file("data.csv");
  const auto cfg = tmp.file("run.json");
  const auto model = tmp.file("model.json");
  const auto pred = tmp.file("pred.csv");
  write_config(cfg, kSmallConfig);

  auto gen = run_cli("gen-data --out " + data.string() +
                         " --rows 400 --cols 6 --informative 3 --pos-rate 0.3 --seed 7",
                     tmp.path());
  CHECK(gen.code == 0);

  auto train = run_cli(
      "train --data " + data.string() + " --model " + model.string() + " --config " + cfg.string(),
      tmp.path());
  CAPTURE(train.output);
  CHECK(train.code == 0);
  CHECK(train.output.find("layer 0") != std::string::npos);
  CHECK(train.output.find("best layer") != std::string::npos);
  CHECK(fs::exists(model));

  auto predict = run_cli("predict --model " + model.string() + " --data " + data.string() +
                             " --out " + pred.string() + " --drop-column label",
                         tmp.path());
  CHECK(predict.code == 0);
  const std::string scores = testutil::slurp(pred);
  CHECK(scores.rfind("score\n", 0) == 0);
  CHECK(std::count(scores.begin(), scores.end(), '\n') == 401);

  const auto pr = tmp.file("pr.csv");
  auto eval = run_cli("eval --scores " + pred.string() + " --labels " + data.string() +
                          " --rate 0.1 --pr-out " + pr.string(),
                      tmp.path());
  CAPTURE(eval.output);
  CHECK(eval.code == 0);
  // The model saw this data during training, so discrimination beats chance.
  CHECK(printed_metric(eval.output, "auc") > 0.6);
  CHECK(printed_metric(eval.output, "ks") > 0.0);
  CHECK(eval.output.find("recall@0.1") != std::string::npos);
  CHECK(testutil::slurp(pr).rfind("recall,precision,threshold\n", 0) == 0);

  // The comma-list spelling covers the same flag.
  auto multi = run_cli("eval --scores " + pred.string() + " --labels " + data.string() +
                           " --rates 0.05,0.2",
                       tmp.path());
  CHECK(multi.code == 0);
  CHECK(multi.output.find("recall@0.05") != std::string::npos);
  CHECK(multi.output.find("recall@0.2") != std::string::npos);
}

TEST_CASE("the full pipeline is byte-reproducible run to run") {
  testutil::TempDir tmp;
  const auto cfg = tmp.file("run.json");
  write_config(cfg, kSmallConfig);

  auto one_run = [&](const std::string& tag) {
    const auto data = tmp.file("data_" + tag + ".csv");
    const auto model = tmp.file("model_" + tag + ".json");
    const auto pred = tmp.file("pred_" + tag + ".csv");
    CHECK(run_cli("gen-data --out " + data.string() +
                      " --rows 300 --cols 5 --informative 2 --pos-rate 0.25 --seed 11",
                  tmp.path())
              .code == 0);
    CHECK(run_cli("train --data " + data.string() + " --model " + model.string() + " --config " +
                      cfg.string(),
                  tmp.path())
              .code == 0);
    CHECK(run_cli("predict --model " + model.string() + " --data " + data.string() + " --out " +
                      pred.string() + " --drop-column label",
                  tmp.path())
              .code == 0);
    return std::tuple{testutil::slurp(data), testutil::slurp(model), testutil::slurp(pred)};
  };

  const auto first = one_run("a");
  const auto second = one_run("b");
  CHECK(std::get<0>(first) == std::get<0>(second));
  CHECK(std::get<1>(first) == std::get<1>(second));
  CHECK(std::get<2>(first) == std::get<2>(second));
}

TEST_CASE("checkpointed training writes the same model and resumes after damage") {
  testutil::TempDir tmp;
  const auto data = tmp.file("data.csv");
  const auto cfg = tmp.file("run.json");
  write_config(cfg, kSmallConfig);
  REQUIRE(run_cli("gen-data --out " + data.string() +
                      " --rows 300 --cols 5 --informative 2 --pos-rate 0.25 --seed 19",
                  tmp.path())
              .code == 0);

  const auto plain = tmp.file("plain.json");
  REQUIRE(run_cli("train --data " + data.string() + " --model " + plain.string() + " --config " +
                      cfg.string(),
                  tmp.path())
              .code == 0);

  const auto ckpt_model = tmp.file("ckpt.json");
  const fs::path ckpt_dir = tmp.path() / "ckpt";
  REQUIRE(run_cli("train --data " + data.string() + " --model " + ckpt_model.string() +
                      " --config " + cfg.string() + " --checkpoint " + ckpt_dir.string(),
                  tmp.path())
              .code == 0);
  CHECK(testutil::slurp(ckpt_model) == testutil::slurp(plain));

  // Wipe one layer's records; the rerun rebuilds only that part and agrees.
  REQUIRE(fs::exists(ckpt_dir / "L0"));
  fs::remove_all(ckpt_dir / "L0");
  const auto resumed = tmp.file("resumed.json");
  REQUIRE(run_cli("train --data " + data.string() + " --model " + resumed.string() +
                      " --config " + cfg.string() + " --checkpoint " + ckpt_dir.string(),
                  tmp.path())
              .code == 0);
  CHECK(testutil::slurp(resumed) == testutil::slurp(plain));
}

TEST_CASE("feature selection ranks columns and applies stored selections") {
  testutil::TempDir tmp;
  const auto data = tmp.file("data.csv");
  REQUIRE(run_cli("gen-data --out " + data.string() +
                      " --rows 400 --cols 8 --informative 2 --pos-rate 0.3 --seed 23",
                  tmp.path())
              .code == 0);

  const auto ranked = tmp.file("ranked.csv");
  const auto indices = tmp.file("picked.json");
  auto select = run_cli("select --data " + data.string() + " --out-data " + ranked.string() +
                            " --top-k 3 --out-indices " + indices.string(),
                        tmp.path());
  CAPTURE(select.output);
  CHECK(select.code == 0);
  const std::string picked = testutil::slurp(indices);
  CHECK(picked.find("selected_features") != std::string::npos);

  const auto applied = tmp.file("applied.csv");
  auto apply = run_cli("select --data " + data.string() + " --out-data " + applied.string() +
                           " --apply " + indices.string(),
                       tmp.path());
  CHECK(apply.code == 0);
  CHECK(testutil::slurp(applied) == testutil::slurp(ranked));

  // --top-k and --apply cannot be combined, and one of them is required.
  CHECK(run_cli("select --data " + data.string() + " --out-data " + ranked.string() +
                    " --top-k 3 --apply " + indices.string(),
                tmp.path())
            .code == 2);
  CHECK(run_cli("select --data " + data.string() + " --out-data " + ranked.string(), tmp.path())
            .code == 2);
}

TEST_CASE("usage errors exit 2 and runtime errors exit 1") {
  testutil::TempDir tmp;
  const auto data = tmp.file("data.csv");
  REQUIRE(run_cli("gen-data --out " + data.string() +
                      " --rows 120 --cols 4 --informative 2 --pos-rate 0.3 --seed 5",
                  tmp.path())
              .code == 0);

  CHECK(run_cli("", tmp.path()).code == 2);                 // a subcommand is required
  CHECK(run_cli("--help", tmp.path()).code == 0);
  CHECK(run_cli("train --bogus-flag 1", tmp.path()).code == 2);
  CHECK(run_cli("gen-data --out x.csv --rows 10 --cols 4 --pos-rate 0", tmp.path()).code == 2);

  const auto bad_cfg = tmp.file("bad.json");
  write_config(bad_cfg, R"({"num_trees": 5})");  // mart keys do not live at the top level
  auto bad = run_cli("train --data " + data.string() + " --model " + tmp.file("m.json").string() +
                         " --config " + bad_cfg.string(),
                     tmp.path());
  CHECK(bad.code == 2);
  CHECK(bad.output.find("unknown config key") != std::string::npos);

  CHECK(run_cli("train --data " + tmp.file("absent.csv").string() + " --model " +
                    tmp.file("m.json").string(),
                tmp.path())
            .code == 1);

  // Width mismatch: the model expects 4 columns, the raw file carries 5.
  const auto cfg = tmp.file("run.json");
  write_config(cfg, kSmallConfig);
  const auto model = tmp.file("model.json");
  REQUIRE(run_cli("train --data " + data.string() + " --model " + model.string() + " --config " +
                      cfg.string(),
                  tmp.path())
              .code == 0);
  auto wide = run_cli("predict --model " + model.string() + " --data " + data.string() +
                          " --out " + tmp.file("p.csv").string(),
                      tmp.path());
  CHECK(wide.code == 1);

  const auto junk = tmp.file("junk.csv");
  write_config(junk, "not_a_score_header\n0.5\n");
  CHECK(run_cli("eval --scores " + junk.string() + " --labels " + data.string(), tmp.path())
            .code == 1);
}
