#pragma once

// Run configuration: a JSON document merged over built-in defaults, with
// dotted-path overrides, parsed into typed settings. The merged document is
// the "effective config" echoed into every manifest.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "advtune/adv_training.hpp"
#include "advtune/dataset.hpp"
#include "advtune/errors.hpp"
#include "advtune/hpo.hpp"
#include "advtune/network.hpp"
#include "advtune/pgd.hpp"
#include "advtune/search_space.hpp"
#include "advtune/sweep.hpp"

namespace advtune {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Network spec <-> JSON

inline json network_to_json(const NetworkSpec& spec) {
  json layers = json::array();
  for (const Layer& l : spec.layers) {
    json j{{"type", layer_name(l)}};
    if (const auto* d = std::get_if<Dense>(&l)) {
      j["in"] = d->in;
      j["out"] = d->out;
    } else if (const auto* c = std::get_if<Conv2D>(&l)) {
      j["in"] = c->in_channels;
      j["out"] = c->out_channels;
    }
    layers.push_back(std::move(j));
  }
  return {{"input_shape", spec.input_shape}, {"classes", spec.classes}, {"layers", layers}};
}

inline NetworkSpec network_from_json(const json& j) {
  try {
    NetworkSpec spec;
    spec.input_shape = j.at("input_shape").get<Shape>();
    spec.classes = j.at("classes").get<std::size_t>();
    for (const json& l : j.at("layers")) {
      const std::string type = l.at("type").get<std::string>();
      if (type == "dense")
        spec.layers.emplace_back(Dense{l.at("in").get<std::size_t>(), l.at("out").get<std::size_t>()});
      else if (type == "conv2d")
        spec.layers.emplace_back(
            Conv2D{l.at("in").get<std::size_t>(), l.at("out").get<std::size_t>()});
      else if (type == "relu")
        spec.layers.emplace_back(ReLU{});
      else if (type == "maxpool")
        spec.layers.emplace_back(MaxPool{});
      else if (type == "flatten")
        spec.layers.emplace_back(Flatten{});
      else
        throw SpecError("unknown layer type '" + type + "'");
    }
    plan_shapes(spec);
    return spec;
  } catch (const json::exception& e) {
    throw SpecError(std::string("network: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Defaults

// Desk-scale defaults: a small conv net on the bundled 10k MNIST subset.
inline json default_config() {
  return json::parse(R"({
    "seed": 1,
    "output_dir": "runs/default",
    "workers": 1,
    "dataset": {
      "source": "idx",
      "images": "data/mnist10k/images-idx3-ubyte.gz",
      "labels": "data/mnist10k/labels-idx1-ubyte.gz",
      "sample_shape": [1, 28, 28],
      "limit": 0,
      "classes": 3,
      "per_class": 200,
      "dims": 8,
      "spread": 0.15,
      "synthetic_seed": 7
    },
    "split": {"validation": 1000, "test": 1000, "seed": 7},
    "network": {
      "input_shape": [1, 28, 28],
      "classes": 10,
      "layers": [
        {"type": "conv2d", "in": 1, "out": 16}, {"type": "relu"}, {"type": "maxpool"},
        {"type": "conv2d", "in": 16, "out": 32}, {"type": "relu"}, {"type": "maxpool"},
        {"type": "flatten"},
        {"type": "dense", "in": 800, "out": 100}, {"type": "relu"},
        {"type": "dense", "in": 100, "out": 10}
      ]
    },
    "train": {
      "ratio": 0.0,
      "epsilon": 0.3,
      "epochs": 1,
      "batch_size": 50,
      "learning_rate": 0.05,
      "momentum": 0.0,
      "epsilon_warmup_epochs": 0.0,
      "attack": {"step_size": 0.1, "max_iterations": 7, "random_start": true}
    },
    "attack": {
      "epsilon": 0.3,
      "step_size": 0.01,
      "max_iterations": 40,
      "random_start": true,
      "clip_min": 0.0,
      "clip_max": 1.0
    },
    "eval": {"model": "", "split": "test", "subsample": 0},
    "sweep": {
      "ratio_values": [0.0, 0.25, 0.5, 0.75, 1.0],
      "epsilon_values": [0.1, 0.2, 0.3, 0.4, 0.5],
      "repetitions": 3,
      "split": "test"
    },
    "tune": {
      "strategy": "tpe",
      "n": 50,
      "repetitions": 1,
      "beta": "unbounded",
      "space": {"ratio_points": 30, "eps_points": 30, "eps_min": 0.01, "eps_max": 0.5},
      "tpe": {"gamma": 0.25, "n_init": 10, "n_candidates": 24}
    }
  })");
}

// ---------------------------------------------------------------------------
// Merging and overrides

namespace detail {

// Objects merge key by key; anything else replaces. Keys absent from the
// defaults are rejected so typos surface as config errors. The network
// section is replaced wholesale.
inline void merge_into(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) throw SpecError("config section '" + path + "' must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw SpecError("unknown config key '" + here + "'");
    if (base[key].is_object() && here != "network")
      merge_into(base[key], value, here);
    else
      base[key] = value;
  }
}

inline json parse_override_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return text;
  }
}

}  // namespace detail

// "a.b.c=value": the value is read as JSON when it parses, else as a string.
inline void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw SpecError("override '" + assignment + "' is not of the form key.path=value");
  const std::string path = assignment.substr(0, eq);
  json* node = &config;
  std::string seen;
  std::istringstream parts(path);
  std::string part;
  std::vector<std::string> keys;
  while (std::getline(parts, part, '.')) keys.push_back(part);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    seen += (i ? "." : "") + keys[i];
    if (!node->is_object() || !node->contains(keys[i]))
      throw SpecError("unknown config key '" + seen + "'");
    node = &(*node)[keys[i]];
  }
  *node = detail::parse_override_value(assignment.substr(eq + 1));
}

// Reads a config file. A run manifest is accepted too: its recorded effective
// config is used, which makes any run replayable.
inline json load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SpecError("config " + path.string() + ": " + e.what());
  }
  if (j.is_object() && j.contains("manifest_version")) {
    if (!j.contains("config")) throw SpecError("manifest " + path.string() + " has no config");
    return j.at("config");
  }
  return j;
}

inline json effective_config(const std::optional<json>& file,
                             const std::vector<std::string>& overrides) {
  json cfg = default_config();
  if (file) detail::merge_into(cfg, *file, "");
  for (const auto& o : overrides) apply_override(cfg, o);
  return cfg;
}

// ---------------------------------------------------------------------------
// Typed view

struct DatasetConfig {
  std::string source;  // "idx" or "synthetic"
  std::filesystem::path images, labels;
  Shape sample_shape;
  std::size_t limit = 0;  // keep the first N samples; 0 keeps all
  std::size_t classes = 0, per_class = 0, dims = 0;
  double spread = 0.0;
  std::uint64_t synthetic_seed = 0;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  std::size_t workers = 1;
  DatasetConfig dataset;
  SplitSpec split;
  NetworkSpec network;
  AdvTrainConfig train;
  AttackConfig attack;  // evaluation attack
  std::filesystem::path eval_model;
  std::string eval_split;
  std::size_t eval_subsample = 0;
  std::vector<double> sweep_ratios, sweep_epsilons;
  std::size_t sweep_repetitions = 1;
  std::string sweep_split;
  Strategy tune_strategy = Strategy::tpe;
  std::size_t tune_n = 0;
  std::size_t tune_repetitions = 1;
  std::optional<double> tune_beta;  // percentage points; nullopt = unbounded
  SearchSpace tune_space;
  TpeParams tpe;
};

namespace detail {

template <class T>
T get_field(const json& j, const char* section, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw SpecError(std::string("config field '") + section + "." + key + "' is missing or has the wrong type");
  }
}

inline void check_split_name(const std::string& name, const char* field) {
  if (name != "test" && name != "validation")
    throw SpecError(std::string(field) + " must be 'test' or 'validation'");
}

}  // namespace detail

// Typed, validated view of an effective config. Referenced dataset files must
// exist.
inline RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir = {}) {
  using detail::get_field;
  RunConfig c;
  c.seed = get_field<std::uint64_t>(j, "", "seed");
  c.output_dir = get_field<std::string>(j, "", "output_dir");
  c.workers = get_field<std::size_t>(j, "", "workers");
  if (c.workers < 1) throw SpecError("workers must be >= 1");

  const json& d = j.at("dataset");
  c.dataset.source = get_field<std::string>(d, "dataset", "source");
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  c.dataset.images = resolve(get_field<std::string>(d, "dataset", "images"));
  c.dataset.labels = resolve(get_field<std::string>(d, "dataset", "labels"));
  c.dataset.sample_shape = get_field<Shape>(d, "dataset", "sample_shape");
  c.dataset.limit = get_field<std::size_t>(d, "dataset", "limit");
  c.dataset.classes = get_field<std::size_t>(d, "dataset", "classes");
  c.dataset.per_class = get_field<std::size_t>(d, "dataset", "per_class");
  c.dataset.dims = get_field<std::size_t>(d, "dataset", "dims");
  c.dataset.spread = get_field<double>(d, "dataset", "spread");
  c.dataset.synthetic_seed = get_field<std::uint64_t>(d, "dataset", "synthetic_seed");
  if (c.dataset.source == "idx") {
    for (const auto& p : {c.dataset.images, c.dataset.labels})
      if (!std::filesystem::is_regular_file(p))
        throw SpecError("dataset file not found: " + p.string());
  } else if (c.dataset.source != "synthetic") {
    throw SpecError("dataset.source must be 'idx' or 'synthetic'");
  }

  const json& s = j.at("split");
  c.split = {get_field<std::size_t>(s, "split", "validation"),
             get_field<std::size_t>(s, "split", "test"),
             get_field<std::uint64_t>(s, "split", "seed")};

  c.network = network_from_json(j.at("network"));

  const json& t = j.at("train");
  const json& ta = t.at("attack");
  c.train.ratio = get_field<double>(t, "train", "ratio");
  c.train.attack.epsilon = get_field<double>(t, "train", "epsilon");
  c.train.attack.step_size = get_field<double>(ta, "train.attack", "step_size");
  c.train.attack.max_iterations = get_field<std::size_t>(ta, "train.attack", "max_iterations");
  c.train.attack.random_start = get_field<bool>(ta, "train.attack", "random_start");
  c.train.epochs = get_field<std::size_t>(t, "train", "epochs");
  c.train.batch_size = get_field<std::size_t>(t, "train", "batch_size");
  c.train.learning_rate = get_field<double>(t, "train", "learning_rate");
  c.train.momentum = get_field<double>(t, "train", "momentum");
  c.train.epsilon_warmup_epochs = get_field<double>(t, "train", "epsilon_warmup_epochs");
  c.train.seed = c.seed;

  const json& a = j.at("attack");
  c.attack.epsilon = get_field<double>(a, "attack", "epsilon");
  c.attack.step_size = get_field<double>(a, "attack", "step_size");
  c.attack.max_iterations = get_field<std::size_t>(a, "attack", "max_iterations");
  c.attack.random_start = get_field<bool>(a, "attack", "random_start");
  c.attack.clip_min = get_field<double>(a, "attack", "clip_min");
  c.attack.clip_max = get_field<double>(a, "attack", "clip_max");
  c.train.attack.clip_min = c.attack.clip_min;
  c.train.attack.clip_max = c.attack.clip_max;
  c.train.validate();
  c.attack.validate();

  const json& e = j.at("eval");
  const auto model = get_field<std::string>(e, "eval", "model");
  c.eval_model = model.empty() ? std::filesystem::path{} : resolve(model);
  c.eval_split = get_field<std::string>(e, "eval", "split");
  c.eval_subsample = get_field<std::size_t>(e, "eval", "subsample");
  detail::check_split_name(c.eval_split, "eval.split");

  const json& sw = j.at("sweep");
  c.sweep_ratios = get_field<std::vector<double>>(sw, "sweep", "ratio_values");
  c.sweep_epsilons = get_field<std::vector<double>>(sw, "sweep", "epsilon_values");
  c.sweep_repetitions = get_field<std::size_t>(sw, "sweep", "repetitions");
  c.sweep_split = get_field<std::string>(sw, "sweep", "split");
  detail::check_split_name(c.sweep_split, "sweep.split");
  SweepSpec{c.sweep_ratios, c.sweep_epsilons, c.sweep_repetitions, c.train, c.attack, c.seed}
      .validate();

  const json& tu = j.at("tune");
  c.tune_strategy = parse_strategy(get_field<std::string>(tu, "tune", "strategy"));
  c.tune_n = get_field<std::size_t>(tu, "tune", "n");
  c.tune_repetitions = get_field<std::size_t>(tu, "tune", "repetitions");
  if (c.tune_repetitions < 1) throw SpecError("tune.repetitions must be >= 1");
  const json& beta = tu.at("beta");
  if (beta.is_string()) {
    if (beta.get<std::string>() != "unbounded")
      throw SpecError("tune.beta must be a number of percentage points or \"unbounded\"");
  } else if (beta.is_number()) {
    c.tune_beta = beta.get<double>();
    if (!(*c.tune_beta >= 0.0)) throw SpecError("tune.beta must be >= 0");
  } else {
    throw SpecError("tune.beta must be a number or \"unbounded\"");
  }
  const json& sp = tu.at("space");
  c.tune_space = {get_field<std::size_t>(sp, "tune.space", "ratio_points"),
                  get_field<std::size_t>(sp, "tune.space", "eps_points"),
                  get_field<double>(sp, "tune.space", "eps_min"),
                  get_field<double>(sp, "tune.space", "eps_max")};
  c.tune_space.validate();
  if (c.tune_n < 1 || c.tune_n > c.tune_space.size())
    throw SpecError("tune.n must lie in [1, " + std::to_string(c.tune_space.size()) + "]");
  const json& tp = tu.at("tpe");
  c.tpe.gamma = get_field<double>(tp, "tune.tpe", "gamma");
  c.tpe.n_init = get_field<std::size_t>(tp, "tune.tpe", "n_init");
  c.tpe.n_candidates = get_field<std::size_t>(tp, "tune.tpe", "n_candidates");
  if (!(c.tpe.gamma > 0.0 && c.tpe.gamma < 1.0)) throw SpecError("tune.tpe.gamma must lie in (0,1)");
  return c;
}

// Loads the dataset a config describes (before splitting).
inline LabeledSet load_dataset(const DatasetConfig& d) {
  LabeledSet all;
  if (d.source == "synthetic") {
    all = synth_blobs(d.classes, d.per_class, d.dims, d.spread, d.synthetic_seed);
  } else {
    all = load_idx(d.images, d.labels).reshaped(d.sample_shape);
  }
  if (d.limit > 0 && d.limit < all.size()) {
    std::vector<std::size_t> rows(d.limit);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    all = all.subset(rows);
  }
  return all;
}

}  // namespace advtune
