#pragma once

// JSON renderings of tuning results: one JSONL line per trial and a summary
// document per tune invocation. Wall-clock durations are kept out of these
// files so reruns are byte-identical; the manifest records them instead.

#include <string>

#include <json.hpp>

#include "advtune/hpo.hpp"
#include "advtune/sweep.hpp"

namespace advtune {

inline nlohmann::json trial_json(const Trial& t) {
  nlohmann::json j{{"iteration", t.iteration},
                   {"ratio_index", t.point.ratio_index},
                   {"eps_index", t.point.eps_index},
                   {"ratio", t.ratio},
                   {"epsilon", t.epsilon},
                   {"seed", t.seed},
                   {"failed", t.failed}};
  if (t.failed) {
    j["error"] = t.error;
  } else {
    j["acc_test"] = t.acc_test;
    j["acc_adv"] = t.acc_adv;
  }
  return j;
}

inline Trial trial_from_json(const nlohmann::json& j) {
  Trial t;
  t.iteration = j.at("iteration").get<std::size_t>();
  t.point = {j.at("ratio_index").get<std::size_t>(), j.at("eps_index").get<std::size_t>()};
  t.ratio = j.at("ratio").get<double>();
  t.epsilon = j.at("epsilon").get<double>();
  t.seed = j.at("seed").get<std::uint64_t>();
  t.failed = j.at("failed").get<bool>();
  if (t.failed) {
    t.error = j.value("error", "");
  } else {
    t.acc_test = j.at("acc_test").get<double>();
    t.acc_adv = j.at("acc_adv").get<double>();
  }
  return t;
}

// Every trial of every repetition, in repetition then iteration order.
inline std::string trials_jsonl(const TuneResult& result) {
  std::string out;
  for (std::size_t r = 0; r < result.outcomes.size(); ++r) {
    const auto& o = result.outcomes[r];
    for (const Trial& t : o.trials) {
      nlohmann::json j{{"strategy", strategy_name(o.strategy)}, {"repetition", r}};
      j.update(trial_json(t));
      out += j.dump() + "\n";
    }
  }
  return out;
}

inline nlohmann::json budget_json(const Budget& b) {
  nlohmann::json j{{"baseline_acc", b.baseline_acc}};
  if (b.bounded()) {
    j["beta_points"] = *b.beta_points;
    j["threshold"] = b.threshold();
  } else {
    j["beta_points"] = "unbounded";
  }
  return j;
}

inline nlohmann::json summary_json(const TuneResult& result, const Budget& budget) {
  const TuneSummary& s = result.summary;
  nlohmann::json reps = nlohmann::json::array();
  for (std::size_t r = 0; r < result.outcomes.size(); ++r) {
    const auto& o = result.outcomes[r];
    nlohmann::json j{{"repetition", r},
                     {"seed", o.seed},
                     {"iterations", o.iterations},
                     {"feasible", o.filter.feasible.size()},
                     {"infeasible", o.infeasible()}};
    if (!o.error.empty()) j["error"] = o.error;
    if (const Trial* b = o.best()) j["best"] = trial_json(*b);
    reps.push_back(std::move(j));
  }
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  nlohmann::json j{{"strategy", strategy_name(s.strategy)},
                   {"n", s.n},
                   {"repetitions", s.repetitions},
                   {"budget", budget_json(budget)},
                   {"successes", s.successes},
                   {"success_rate", s.success_rate},
                   {"infeasible", s.successes == 0},
                   {"best_acc_adv_mean", opt(s.mean_best_adv)},
                   {"best_acc_adv_std", opt(s.std_best_adv)},
                   {"per_repetition", reps}};
  if (s.ci95_best_adv)
    j["best_acc_adv_ci95"] = {s.ci95_best_adv->low, s.ci95_best_adv->high};
  else
    j["best_acc_adv_ci95"] = nullptr;
  return j;
}

// Raw per-repetition values behind a surface CSV.
inline nlohmann::json surface_raw_json(const SurfaceGrid& grid) {
  nlohmann::json cells = nlohmann::json::array();
  for (const SurfaceCell& c : grid.cells)
    cells.push_back({{"ratio", c.ratio},
                     {"epsilon", c.epsilon},
                     {"seeds", c.seeds},
                     {"acc_test", c.acc_test},
                     {"acc_adv", c.acc_adv},
                     {"errors", c.errors}});
  return {{"ratio_values", grid.ratio_values},
          {"epsilon_values", grid.epsilon_values},
          {"cells", cells}};
}

}  // namespace advtune
