#pragma once

// The advtune command line: baseline, train, eval, sweep and tune.
//
// Exit codes: 0 success, 2 configuration error, 3 runtime failure,
// 4 tune finished without any configuration inside the accuracy budget.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "advtune/config.hpp"
#include "advtune/evaluation.hpp"
#include "advtune/hpo.hpp"
#include "advtune/manifest.hpp"
#include "advtune/model_io.hpp"
#include "advtune/parallel.hpp"
#include "advtune/reports.hpp"
#include "advtune/sweep.hpp"

namespace advtune::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;
inline constexpr int kExitInfeasible = 4;

struct Options {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
  std::optional<double> ratio, epsilon;
  std::optional<std::string> beta_text;
  std::optional<std::string> model, strategy;
  std::optional<std::size_t> n, repetitions, subsample;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

inline std::string number_text(double v) { return nlohmann::json(v).dump(); }

// Command-specific flags become dotted overrides so the manifest's effective
// config reflects them.
inline std::vector<std::string> flag_overrides(const std::string& command, const Options& o) {
  std::vector<std::string> out = o.overrides;
  if (!o.out.empty()) out.push_back("output_dir=" + nlohmann::json(o.out).dump());
  if (command == "train") {
    if (o.ratio) out.push_back("train.ratio=" + number_text(*o.ratio));
    if (o.epsilon) out.push_back("train.epsilon=" + number_text(*o.epsilon));
  }
  if (command == "eval") {
    if (o.epsilon) out.push_back("attack.epsilon=" + number_text(*o.epsilon));
    if (o.model) out.push_back("eval.model=" + nlohmann::json(*o.model).dump());
    if (o.subsample) out.push_back("eval.subsample=" + std::to_string(*o.subsample));
  }
  if (command == "sweep" && o.repetitions)
    out.push_back("sweep.repetitions=" + std::to_string(*o.repetitions));
  if (command == "tune") {
    if (o.strategy) out.push_back("tune.strategy=" + nlohmann::json(*o.strategy).dump());
    if (o.n) out.push_back("tune.n=" + std::to_string(*o.n));
    if (o.repetitions) out.push_back("tune.repetitions=" + std::to_string(*o.repetitions));
    if (o.beta_text) {
      if (*o.beta_text == "unbounded") {
        out.push_back("tune.beta=\"unbounded\"");
      } else {
        std::size_t used = 0;
        double v = 0.0;
        try {
          v = std::stod(*o.beta_text, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != o.beta_text->size())
          throw SpecError("--beta expects a number of percentage points or 'unbounded'");
        out.push_back("tune.beta=" + number_text(v));
      }
    }
  }
  return out;
}

inline Splits load_splits(const RunConfig& cfg) {
  return split(load_dataset(cfg.dataset), cfg.split);
}

inline const LabeledSet& pick_split(const Splits& s, const std::string& name) {
  return name == "validation" ? s.validation : s.test;
}

inline LabeledSet maybe_subsample(const LabeledSet& data, std::size_t n) {
  if (n == 0 || n >= data.size()) return data;
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  return data.subset(rows);
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

inline nlohmann::json eval_json(const EvalResult& r, const std::string& split_name) {
  return {{"split", split_name},
          {"acc_test", r.acc_test},
          {"acc_adv", r.acc_adv},
          {"eval_epsilon", r.eval_epsilon},
          {"samples", r.clean_samples}};
}

// ---------------------------------------------------------------------------
// Commands. Each writes its artifacts and manifest into cfg.output_dir.

inline int cmd_baseline(const RunConfig& cfg, Manifest& m) {
  const auto t0 = Clock::now();
  const Splits s = load_splits(cfg);
  AdvTrainConfig tc = cfg.train.with(0.0, cfg.train.attack.epsilon);
  const TrainReport report = train_clean(s.train, tc, cfg.network);
  const nlohmann::json out{{"seed", tc.seed},
                           {"acc_validation", clean_accuracy(report.params, cfg.network, s.validation)},
                           {"acc_test", clean_accuracy(report.params, cfg.network, s.test)},
                           {"epoch_loss", report.epoch_loss}};
  write_json(cfg.output_dir / "baseline.json", out);
  m.seed("train", tc.seed);
  m.artifact(cfg.output_dir, "baseline.json");
  m.timing("total_seconds", seconds_since(t0));
  return kExitOk;
}

inline int cmd_train(const RunConfig& cfg, Manifest& m) {
  const auto t0 = Clock::now();
  const Splits s = load_splits(cfg);
  const TrainReport report = adversarial_train(s.train, cfg.train, cfg.network);
  const auto bin = cfg.output_dir / "model.bin";
  save_model(bin, cfg.network, report.params);
  const AttackConfig attack = eval_attack_for(cfg.attack, cfg.seed);
  const EvalResult r = evaluate(report.params, cfg.network, s.test, attack);
  nlohmann::json metrics = eval_json(r, "test");
  metrics["ratio"] = cfg.train.ratio;
  metrics["train_epsilon"] = cfg.train.train_epsilon();
  metrics["epoch_loss"] = report.epoch_loss;
  write_json(cfg.output_dir / "metrics.json", metrics);
  m.seed("train", cfg.train.seed);
  m.seed("eval_attack", attack.seed);
  for (const char* name : {"model.bin", "model.json", "metrics.json"}) m.artifact(cfg.output_dir, name);
  m.timing("train_seconds", report.duration_seconds);
  m.timing("total_seconds", seconds_since(t0));
  return kExitOk;
}

inline int cmd_eval(const RunConfig& cfg, Manifest& m) {
  const auto t0 = Clock::now();
  const LoadedModel model = load_model(cfg.eval_model);
  const Splits s = load_splits(cfg);
  const LabeledSet data = maybe_subsample(pick_split(s, cfg.eval_split), cfg.eval_subsample);
  const AttackConfig attack = eval_attack_for(cfg.attack, cfg.seed);
  const EvalResult r = evaluate(model.params, model.spec, data, attack);
  nlohmann::json metrics = eval_json(r, cfg.eval_split);
  metrics["model_sha256"] = sha256_file(cfg.eval_model);
  write_json(cfg.output_dir / "metrics.json", metrics);
  m.seed("eval_attack", attack.seed);
  m.artifact(cfg.output_dir, "metrics.json");
  m.timing("total_seconds", seconds_since(t0));
  return kExitOk;
}

inline int cmd_sweep(const RunConfig& cfg, Manifest& m) {
  const auto t0 = Clock::now();
  const Splits s = load_splits(cfg);
  const SweepSpec spec{cfg.sweep_ratios, cfg.sweep_epsilons, cfg.sweep_repetitions,
                       cfg.train,        cfg.attack,         cfg.seed};
  const SurfaceGrid grid =
      run_sweep(spec, s.train, pick_split(s, cfg.sweep_split), cfg.network, worker_count(cfg.workers));
  export_surface(grid, cfg.output_dir / "surface.csv");
  write_json(cfg.output_dir / "surface_raw.json", surface_raw_json(grid));
  m.seed("root", cfg.seed);
  m.artifact(cfg.output_dir, "surface.csv");
  m.artifact(cfg.output_dir, "surface_raw.json");
  m.timing("total_seconds", seconds_since(t0));
  std::size_t failures = 0;
  for (const auto& c : grid.cells) failures += c.errors.size();
  if (failures > 0) std::cerr << "warning: " << failures << " training run(s) failed\n";
  return kExitOk;
}

inline int cmd_tune(const RunConfig& cfg, Manifest& m) {
  const auto t0 = Clock::now();
  const Splits s = load_splits(cfg);
  const std::size_t workers = worker_count(cfg.workers);

  // Budget is enforced on the validation split; test numbers are reported
  // alongside but never used for selection.
  // Same seed as the baseline command, so both report the same Acc_f.
  const std::uint64_t baseline_seed = cfg.seed;
  AdvTrainConfig clean = cfg.train.with(0.0, cfg.train.attack.epsilon);
  clean.seed = baseline_seed;
  const TrainReport base_model = train_clean(s.train, clean, cfg.network);
  const double baseline_val = clean_accuracy(base_model.params, cfg.network, s.validation);
  const double baseline_test = clean_accuracy(base_model.params, cfg.network, s.test);
  const Budget budget{cfg.tune_beta, baseline_val};

  const Objective objective =
      training_objective(s.train, s.validation, cfg.network, cfg.train, cfg.attack);
  const TuneResult result = tune(cfg.tune_strategy, cfg.tune_space, cfg.tune_n, budget, objective,
                                 cfg.tune_repetitions, cfg.seed, cfg.tpe, workers);

  nlohmann::json summary = summary_json(result, budget);
  summary["baseline"] = {{"seed", baseline_seed},
                         {"acc_validation", baseline_val},
                         {"acc_test", baseline_test}};

  // Test-split report for the overall best feasible trial.
  const Trial* overall = nullptr;
  for (const auto& o : result.outcomes)
    if (const Trial* b = o.best(); b && (!overall || better_trial(*b, *overall))) overall = b;
  if (overall) {
    const Measurement test = train_and_measure(s.train, s.test, cfg.network, cfg.train,
                                               overall->ratio, overall->epsilon, cfg.attack,
                                               overall->seed);
    summary["best_test"] = {{"ratio", overall->ratio},
                            {"epsilon", overall->epsilon},
                            {"seed", overall->seed},
                            {"acc_test", test.acc_test},
                            {"acc_adv", test.acc_adv}};
  } else {
    summary["best_test"] = nullptr;
  }

  write_text_file(cfg.output_dir / "trials.jsonl", trials_jsonl(result));
  write_json(cfg.output_dir / "summary.json", summary);
  m.seed("root", cfg.seed);
  m.seed("baseline", baseline_seed);
  nlohmann::json durations = nlohmann::json::array();
  for (const auto& o : result.outcomes) {
    nlohmann::json d = nlohmann::json::array();
    for (const Trial& t : o.trials) d.push_back(t.duration_seconds);
    durations.push_back(std::move(d));
  }
  m.timing("trial_seconds", durations);
  m.artifact(cfg.output_dir, "trials.jsonl");
  m.artifact(cfg.output_dir, "summary.json");
  m.timing("total_seconds", seconds_since(t0));
  return result.summary.successes == 0 ? kExitInfeasible : kExitOk;
}

inline void add_common(CLI::App* sub, Options& o) {
  sub->add_option("-c,--config", o.config_path, "Config JSON or a previous run's manifest.json");
  sub->add_option("-s,--set", o.overrides, "Override a config field: dotted.path=value")
      ->allow_extra_args(false);
  sub->add_option("-o,--out", o.out, "Output directory");
}

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& err = std::cerr) {
  CLI::App app{"Adversarial training, robustness surfaces and budget-constrained tuning"};
  app.set_version_flag("--version", std::string(ADVTUNE_VERSION));
  app.require_subcommand(1);
  Options o;

  auto* baseline = app.add_subcommand("baseline", "Clean training and accuracy on validation/test");
  auto* train = app.add_subcommand("train", "Adversarial training at one (ratio, epsilon)");
  auto* eval = app.add_subcommand("eval", "Clean and adversarial accuracy of a saved model");
  auto* sweep = app.add_subcommand("sweep", "Robustness/accuracy surface over a (ratio, epsilon) grid");
  auto* tunec = app.add_subcommand("tune", "Budget-constrained search over (ratio, epsilon)");
  for (auto* sub : {baseline, train, eval, sweep, tunec}) detail::add_common(sub, o);
  train->add_option("--ratio", o.ratio, "Fraction of each batch replaced by adversarial examples");
  train->add_option("--epsilon", o.epsilon, "Training epsilon");
  eval->add_option("--model", o.model, "Path to model.bin");
  eval->add_option("--epsilon", o.epsilon, "Evaluation attack epsilon");
  eval->add_option("--subsample", o.subsample, "Evaluate on the first N samples of the split");
  sweep->add_option("--repetitions", o.repetitions, "Repetitions per cell");
  tunec->add_option("--strategy", o.strategy, "grid, random or tpe");
  tunec->add_option("--n", o.n, "Iterations per run");
  tunec->add_option("--beta", o.beta_text, "Accuracy budget in percentage points, or 'unbounded'");
  tunec->add_option("--repetitions", o.repetitions, "Repetitions (grid always runs once)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cout, err);
    return kExitConfig;
  }

  std::string command;
  for (auto* sub : {baseline, train, eval, sweep, tunec})
    if (sub->parsed()) command = sub->get_name();

  RunConfig cfg;
  std::optional<Manifest> manifest;
  try {
    std::optional<nlohmann::json> file;
    if (!o.config_path.empty()) file = load_config_file(o.config_path);
    const nlohmann::json effective = effective_config(file, detail::flag_overrides(command, o));
    cfg = parse_run_config(effective);
    if (command == "eval") {
      if (cfg.eval_model.empty()) throw SpecError("eval needs a model (--model or eval.model)");
      if (!std::filesystem::is_regular_file(cfg.eval_model))
        throw SpecError("model file not found: " + cfg.eval_model.string());
    }
    manifest.emplace(command, effective);
    std::filesystem::create_directories(cfg.output_dir);
  } catch (const Error& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    int code = kExitOk;
    if (command == "baseline") code = detail::cmd_baseline(cfg, *manifest);
    else if (command == "train") code = detail::cmd_train(cfg, *manifest);
    else if (command == "eval") code = detail::cmd_eval(cfg, *manifest);
    else if (command == "sweep") code = detail::cmd_sweep(cfg, *manifest);
    else code = detail::cmd_tune(cfg, *manifest);
    manifest->note("exit_code", code);
    manifest->write(cfg.output_dir / "manifest.json");
    if (code == kExitInfeasible) err << "tune: no configuration satisfied the accuracy budget\n";
    return code;
  } catch (const SpecError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace advtune::cli
