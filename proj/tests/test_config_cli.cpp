#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "advtune/cli.hpp"
#include "advtune/config.hpp"
#include "advtune/model_io.hpp"
#include "test_support.hpp"

using namespace advtune;
namespace fs = std::filesystem;

namespace {

std::string read_all(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) { return json::parse(read_all(p)); }

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("advtune_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Small synthetic problem; every command finishes in well under a second.
json blob_config(const fs::path& out) {
  json j = json::parse(R"({
    "seed": 5,
    "dataset": {"source": "synthetic", "classes": 3, "per_class": 40, "dims": 5,
                "spread": 0.1, "synthetic_seed": 2},
    "split": {"validation": 30, "test": 30, "seed": 1},
    "network": {"input_shape": [5], "classes": 3,
                "layers": [{"type": "dense", "in": 5, "out": 8}, {"type": "relu"},
                           {"type": "dense", "in": 8, "out": 3}]},
    "train": {"epochs": 3, "batch_size": 20, "learning_rate": 0.2,
              "attack": {"step_size": 0.03, "max_iterations": 3, "random_start": true}},
    "attack": {"epsilon": 0.1, "step_size": 0.02, "max_iterations": 5},
    "sweep": {"ratio_values": [0.0, 1.0], "epsilon_values": [0.05, 0.1], "repetitions": 2},
    "tune": {"strategy": "random", "n": 6, "repetitions": 2, "beta": "unbounded",
             "space": {"ratio_points": 4, "eps_points": 4, "eps_min": 0.02, "eps_max": 0.2}}
  })");
  j["output_dir"] = out.string();
  return j;
}

fs::path write_config(const fs::path& dir, const json& j) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

int run_cli(std::vector<std::string> args, std::string* err_text = nullptr) {
  args.insert(args.begin(), "advtune");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), err);
  if (err_text) *err_text = err.str();
  return code;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config layer

TEST(Config, OverridesParseJsonThenFallBackToString) {
  json c = default_config();
  apply_override(c, "train.ratio=0.25");
  apply_override(c, "tune.strategy=grid");
  apply_override(c, "sweep.ratio_values=[0, 0.5]");
  apply_override(c, "tune.beta=\"unbounded\"");
  EXPECT_EQ(c["train"]["ratio"], 0.25);
  EXPECT_EQ(c["tune"]["strategy"], "grid");
  EXPECT_EQ(c["sweep"]["ratio_values"].size(), 2u);
  EXPECT_EQ(c["tune"]["beta"], "unbounded");
}

TEST(Config, UnknownKeysAndMalformedOverridesAreRejected) {
  json c = default_config();
  EXPECT_THROW(apply_override(c, "train.ratoi=0.2"), SpecError);
  EXPECT_THROW(apply_override(c, "train.ratio"), SpecError);
  EXPECT_THROW(effective_config(json{{"trian", json::object()}}, {}), SpecError);
}

TEST(Config, InvalidValuesAreSpecErrors) {
  json c = blob_config("/tmp/x");
  c["train"]["ratio"] = 1.5;
  EXPECT_THROW(parse_run_config(effective_config(c, {})).train.validate(), SpecError);
  c = blob_config("/tmp/x");
  c["tune"]["strategy"] = "annealing";
  EXPECT_THROW(parse_run_config(effective_config(c, {})), SpecError);
  c = blob_config("/tmp/x");
  c["train"]["epochs"] = "three";
  EXPECT_THROW(parse_run_config(effective_config(c, {})), SpecError);
}

TEST(Config, NetworkJsonRoundTrip) {
  const NetworkSpec conv = advtune::testing::small_convnet();
  EXPECT_EQ(network_from_json(network_to_json(conv)), conv);
  const NetworkSpec mlp = advtune::testing::small_mlp();
  EXPECT_EQ(network_from_json(network_to_json(mlp)), mlp);
  EXPECT_THROW(network_from_json(json::parse(R"({"input_shape":[2],"classes":2,
      "layers":[{"type":"softmax"}]})")),
               SpecError);
}

TEST(Config, BundledConfigsParse) {
  for (const auto& entry : fs::directory_iterator(ADVTUNE_SOURCE_DIR "/configs")) {
    SCOPED_TRACE(entry.path().string());
    const json j = effective_config(load_config_file(entry.path()), {});
    const RunConfig c = parse_run_config(j, ADVTUNE_SOURCE_DIR);
    EXPECT_NO_THROW(c.train.validate());
    EXPECT_NO_THROW(c.tune_space.validate());
  }
}

TEST(ModelIo, RoundTripIsBitExact) {
  const fs::path dir = scratch("model");
  const NetworkSpec spec = advtune::testing::small_convnet();
  const Params p = init_network(spec, 3);
  save_model(dir / "m.bin", spec, p);
  const LoadedModel back = load_model(dir / "m.bin");
  EXPECT_EQ(back.spec, spec);
  EXPECT_EQ(back.params, p);
  const json header = read_json(dir / "m.json");
  EXPECT_EQ(header["format"], "advtune-model");
}

TEST(ModelIo, TruncatedAndMissingFiles) {
  const fs::path dir = scratch("model_bad");
  const NetworkSpec spec = advtune::testing::small_mlp();
  save_model(dir / "m.bin", spec, init_network(spec, 1));
  fs::resize_file(dir / "m.bin", fs::file_size(dir / "m.bin") - 8);
  EXPECT_THROW(load_model(dir / "m.bin"), FormatError);
  EXPECT_THROW(load_model(dir / "absent.bin"), IoError);
}

// ---------------------------------------------------------------------------
// CLI

TEST(Cli, MissingDatasetIsAConfigErrorWithNoOutputs) {
  const fs::path dir = scratch("missing");
  const fs::path out = dir / "out";
  json c = blob_config(out);
  c["dataset"] = {{"source", "idx"}, {"images", "/nonexistent/images"}, {"labels", "/nonexistent/labels"}};
  std::string err;
  EXPECT_EQ(run_cli({"train", "-c", write_config(dir, c).string()}, &err), cli::kExitConfig);
  EXPECT_NE(err.find("not found"), std::string::npos);
  EXPECT_FALSE(fs::exists(out));
}

TEST(Cli, BadArgumentsAreConfigErrors) {
  const fs::path dir = scratch("badargs");
  const fs::path cfg = write_config(dir, blob_config(dir / "out"));
  EXPECT_EQ(run_cli({}), cli::kExitConfig);
  EXPECT_EQ(run_cli({"tune", "-c", cfg.string(), "--strategy", "bayes"}), cli::kExitConfig);
  EXPECT_EQ(run_cli({"tune", "-c", cfg.string(), "--n", "17"}), cli::kExitConfig);  // > 16 points
  EXPECT_EQ(run_cli({"train", "-c", cfg.string(), "--bogus"}), cli::kExitConfig);
  EXPECT_EQ(run_cli({"eval", "-c", cfg.string(), "--model", (dir / "none.bin").string()}),
            cli::kExitConfig);
  std::ofstream(dir / "broken.json") << "{ not json";
  EXPECT_EQ(run_cli({"train", "-c", (dir / "broken.json").string()}), cli::kExitConfig);
}

TEST(Cli, TrainThenEvalAtZeroEpsilon) {
  const fs::path dir = scratch("train_eval");
  const fs::path cfg = write_config(dir, blob_config(dir / "train"));
  ASSERT_EQ(run_cli({"train", "-c", cfg.string(), "--ratio", "0.5", "--epsilon", "0.1"}), 0);
  const json manifest = read_json(dir / "train" / "manifest.json");
  EXPECT_EQ(manifest["config"]["train"]["ratio"], 0.5);
  EXPECT_EQ(manifest["exit_code"], 0);
  EXPECT_EQ(manifest["artifacts"]["model.bin"]["sha256"].get<std::string>().size(), 64u);

  ASSERT_EQ(run_cli({"eval", "-c", cfg.string(), "-o", (dir / "eval").string(), "--model",
                     (dir / "train" / "model.bin").string(), "--epsilon", "0"}),
            0);
  const json m = read_json(dir / "eval" / "metrics.json");
  EXPECT_EQ(m["acc_adv"], m["acc_test"]);

  ASSERT_EQ(run_cli({"eval", "-c", cfg.string(), "-o", (dir / "eval2").string(), "--model",
                     (dir / "train" / "model.bin").string()}),
            0);
  const json m2 = read_json(dir / "eval2" / "metrics.json");
  EXPECT_LE(m2["acc_adv"].get<double>(), m2["acc_test"].get<double>());
}

TEST(Cli, CorruptModelIsARuntimeError) {
  const fs::path dir = scratch("corrupt");
  const fs::path cfg = write_config(dir, blob_config(dir / "train"));
  ASSERT_EQ(run_cli({"train", "-c", cfg.string()}), 0);
  const fs::path bin = dir / "train" / "model.bin";
  fs::resize_file(bin, 16);
  EXPECT_EQ(run_cli({"eval", "-c", cfg.string(), "-o", (dir / "eval").string(), "--model",
                     bin.string()}),
            cli::kExitRuntime);
}

TEST(Cli, BaselineReportsBothSplits) {
  const fs::path dir = scratch("baseline");
  ASSERT_EQ(run_cli({"baseline", "-c", write_config(dir, blob_config(dir / "out")).string()}), 0);
  const json b = read_json(dir / "out" / "baseline.json");
  EXPECT_GE(b["acc_validation"].get<double>(), 0.9);
  EXPECT_TRUE(b.contains("acc_test"));
}

TEST(Cli, GridTuneBestMatchesBruteForceOverItsLog) {
  const fs::path dir = scratch("grid");
  const fs::path cfg = write_config(dir, blob_config(dir / "out"));
  ASSERT_EQ(run_cli({"tune", "-c", cfg.string(), "--strategy", "grid", "--n", "9"}), 0);
  std::ifstream log(dir / "out" / "trials.jsonl");
  std::vector<json> trials;
  for (std::string line; std::getline(log, line);) trials.push_back(json::parse(line));
  ASSERT_EQ(trials.size(), 9u);
  const json* best = nullptr;
  for (const json& t : trials) {
    EXPECT_FALSE(t.contains("duration_seconds"));
    if (t["failed"].get<bool>()) continue;
    auto key = [](const json& x) {
      return std::make_tuple(-x["acc_adv"].get<double>(), -x["acc_test"].get<double>(),
                             x["epsilon"].get<double>(), x["ratio"].get<double>(),
                             x["iteration"].get<std::size_t>());
    };
    if (!best || key(t) < key(*best)) best = &t;
  }
  ASSERT_NE(best, nullptr);
  const json summary = read_json(dir / "out" / "summary.json");
  EXPECT_EQ(summary["repetitions"], 1);
  EXPECT_EQ(summary["per_repetition"][0]["best"]["iteration"], (*best)["iteration"]);
  EXPECT_EQ(summary["best_test"]["ratio"], (*best)["ratio"]);
}

TEST(Cli, ZeroBudgetOnAPerfectBaselineIsInfeasible) {
  const fs::path dir = scratch("infeasible");
  const fs::path cfg = write_config(dir, blob_config(dir / "out"));
  EXPECT_EQ(run_cli({"tune", "-c", cfg.string(), "--beta", "0", "-s", "dataset.spread=0.02"}),
            cli::kExitInfeasible);
  const json summary = read_json(dir / "out" / "summary.json");
  EXPECT_EQ(summary["baseline"]["acc_validation"], 1.0);
  EXPECT_EQ(summary["infeasible"], true);
  EXPECT_TRUE(summary["best_test"].is_null());
  EXPECT_EQ(read_json(dir / "out" / "manifest.json")["exit_code"], cli::kExitInfeasible);
}

TEST(Cli, ManifestReplayReproducesArtifactsByteForByte) {
  const fs::path dir = scratch("replay");
  const fs::path cfg = write_config(dir, blob_config(dir / "a"));
  ASSERT_EQ(run_cli({"sweep", "-c", cfg.string()}), 0);
  ASSERT_EQ(run_cli({"tune", "-c", cfg.string(), "-o", (dir / "t1").string()}), 0);

  ASSERT_EQ(run_cli({"sweep", "-c", (dir / "a" / "manifest.json").string(), "-o",
                     (dir / "b").string()}),
            0);
  ASSERT_EQ(run_cli({"tune", "-c", (dir / "t1" / "manifest.json").string(), "-o",
                     (dir / "t2").string()}),
            0);
  EXPECT_EQ(read_all(dir / "a" / "surface.csv"), read_all(dir / "b" / "surface.csv"));
  EXPECT_EQ(read_all(dir / "a" / "surface_raw.json"), read_all(dir / "b" / "surface_raw.json"));
  EXPECT_EQ(read_all(dir / "t1" / "trials.jsonl"), read_all(dir / "t2" / "trials.jsonl"));
  EXPECT_EQ(read_json(dir / "t1" / "manifest.json")["artifacts"]["trials.jsonl"],
            read_json(dir / "t2" / "manifest.json")["artifacts"]["trials.jsonl"]);
  EXPECT_FALSE(read_all(dir / "a" / "surface.csv").empty());
}

TEST(Cli, ReleaseBinaryRuns) {
  const std::string cmd = std::string("\"") + ADVTUNE_CLI_PATH + "\" --version > /dev/null";
  EXPECT_EQ(std::system(cmd.c_str()), 0);
}
