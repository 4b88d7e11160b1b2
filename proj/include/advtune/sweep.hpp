#pragma once

// Sensitivity sweep over the (ratio, epsilon) grid: every cell is trained and
// evaluated `repetitions` times with seeds derived from the cell identity, and
// the per-cell accuracy/robustness statistics are exported as CSV.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "advtune/errors.hpp"
#include "advtune/experiment.hpp"
#include "advtune/parallel.hpp"
#include "advtune/rng.hpp"
#include "advtune/stats.hpp"

namespace advtune {

struct SweepSpec {
  std::vector<double> ratio_values;
  std::vector<double> epsilon_values;
  std::size_t repetitions = 1;
  AdvTrainConfig base;
  AttackConfig eval_attack;
  std::uint64_t root_seed = 0;

  void validate() const {
    if (ratio_values.empty() || epsilon_values.empty()) throw SpecError("sweep grid is empty");
    if (repetitions < 1) throw SpecError("sweep needs at least one repetition");
    auto strictly_ascending = [](const std::vector<double>& v) {
      return std::adjacent_find(v.begin(), v.end(), [](double a, double b) { return !(a < b); }) ==
             v.end();
    };
    if (!strictly_ascending(ratio_values) || !strictly_ascending(epsilon_values))
      throw SpecError("sweep values must be sorted ascending and distinct");
    if (ratio_values.front() < 0.0 || ratio_values.back() > 1.0)
      throw SpecError("sweep ratios must lie in [0,1]");
    if (!(epsilon_values.front() > 0.0)) throw SpecError("sweep epsilons must be positive");
  }
};

// `count` evenly spaced values from lo to hi inclusive.
inline std::vector<double> linspace(double lo, double hi, std::size_t count) {
  if (count == 0) return {};
  if (count == 1) return {lo};
  std::vector<double> v(count);
  for (std::size_t i = 0; i < count; ++i)
    v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  return v;
}

struct SurfaceCell {
  double ratio = 0.0;
  double epsilon = 0.0;
  std::vector<double> acc_test;  // successful repetitions only
  std::vector<double> acc_adv;
  std::vector<std::uint64_t> seeds;        // one per attempted repetition
  std::vector<std::string> errors;         // failures, "rep <r>: <message>"
  double acc_test_mean = 0.0, acc_test_std = 0.0;
  double acc_adv_mean = 0.0, acc_adv_std = 0.0;

  std::size_t reps() const { return acc_test.size(); }

  void aggregate() {
    acc_test_mean = stats::mean(acc_test);
    acc_test_std = stats::stddev(acc_test);
    acc_adv_mean = stats::mean(acc_adv);
    acc_adv_std = stats::stddev(acc_adv);
  }
};

// Cells in row-major order: ratio outer, epsilon inner.
struct SurfaceGrid {
  std::vector<double> ratio_values;
  std::vector<double> epsilon_values;
  std::vector<SurfaceCell> cells;

  std::size_t index(std::size_t ri, std::size_t ei) const {
    return ri * epsilon_values.size() + ei;
  }
  const SurfaceCell& cell(std::size_t ri, std::size_t ei) const { return cells.at(index(ri, ei)); }
};

inline std::uint64_t cell_seed(std::uint64_t root, std::size_t cell_index, std::size_t rep) {
  return derive_seed(root, {stream::kCell, cell_index, rep});
}

// Evaluates a subset of jobs (cell * repetitions + rep) in the given order.
// Exposed so tests can check that results do not depend on execution order.
inline SurfaceGrid run_sweep_jobs(const SweepSpec& spec, const LabeledSet& train,
                                  const LabeledSet& eval, const NetworkSpec& net,
                                  const std::vector<std::size_t>& job_order,
                                  std::size_t workers) {
  spec.validate();
  const std::size_t n_cells = spec.ratio_values.size() * spec.epsilon_values.size();
  const std::size_t reps = spec.repetitions;

  struct Slot {
    bool ok = false;
    Measurement m;
    std::string error;
  };
  std::vector<Slot> slots(n_cells * reps);

  parallel_for(job_order.size(), workers, [&](std::size_t j) {
    const std::size_t job = job_order[j];
    const std::size_t cell = job / reps, rep = job % reps;
    const double ratio = spec.ratio_values[cell / spec.epsilon_values.size()];
    const double eps = spec.epsilon_values[cell % spec.epsilon_values.size()];
    Slot& slot = slots[job];
    try {
      slot.m = train_and_measure(train, eval, net, spec.base, ratio, eps, spec.eval_attack,
                                 cell_seed(spec.root_seed, cell, rep));
      slot.ok = true;
    } catch (const Error& e) {
      slot.error = e.what();
    }
  });

  SurfaceGrid grid{spec.ratio_values, spec.epsilon_values, {}};
  grid.cells.resize(n_cells);
  for (std::size_t c = 0; c < n_cells; ++c) {
    SurfaceCell& cell = grid.cells[c];
    cell.ratio = spec.ratio_values[c / spec.epsilon_values.size()];
    cell.epsilon = spec.epsilon_values[c % spec.epsilon_values.size()];
    for (std::size_t r = 0; r < reps; ++r) {
      const Slot& s = slots[c * reps + r];
      cell.seeds.push_back(cell_seed(spec.root_seed, c, r));
      if (s.ok) {
        cell.acc_test.push_back(s.m.acc_test);
        cell.acc_adv.push_back(s.m.acc_adv);
      } else if (!s.error.empty()) {
        cell.errors.push_back("rep " + std::to_string(r) + ": " + s.error);
      }
    }
    cell.aggregate();
  }
  return grid;
}

// Trains and evaluates every (cell, repetition) pair. Training failures are
// recorded in their cell and do not stop the sweep.
inline SurfaceGrid run_sweep(const SweepSpec& spec, const LabeledSet& train,
                             const LabeledSet& eval, const NetworkSpec& net,
                             std::size_t workers = 1) {
  spec.validate();
  std::vector<std::size_t> order(spec.ratio_values.size() * spec.epsilon_values.size() *
                                 spec.repetitions);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  return run_sweep_jobs(spec, train, eval, net, order, workers);
}

// ---------------------------------------------------------------------------
// CSV export

inline constexpr const char* kSurfaceCsvHeader =
    "ratio,epsilon,acc_test_mean,acc_test_std,acc_adv_mean,acc_adv_std,reps";

inline std::string format_fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline std::string surface_csv(const SurfaceGrid& grid) {
  std::vector<const SurfaceCell*> rows;
  for (const auto& c : grid.cells) rows.push_back(&c);
  std::stable_sort(rows.begin(), rows.end(), [](const SurfaceCell* a, const SurfaceCell* b) {
    return a->ratio != b->ratio ? a->ratio < b->ratio : a->epsilon < b->epsilon;
  });
  std::string out = std::string(kSurfaceCsvHeader) + "\n";
  for (const SurfaceCell* c : rows) {
    out += format_fixed6(c->ratio) + "," + format_fixed6(c->epsilon) + "," +
           format_fixed6(c->acc_test_mean) + "," + format_fixed6(c->acc_test_std) + "," +
           format_fixed6(c->acc_adv_mean) + "," + format_fixed6(c->acc_adv_std) + "," +
           std::to_string(c->reps()) + "\n";
  }
  return out;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f.flush()) throw IoError("write failed for " + path.string());
}

inline void export_surface(const SurfaceGrid& grid, const std::filesystem::path& path) {
  write_text_file(path, surface_csv(grid));
}

struct SurfaceRow {
  double ratio, epsilon, acc_test_mean, acc_test_std, acc_adv_mean, acc_adv_std;
  std::size_t reps;
};

inline std::vector<SurfaceRow> parse_surface_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kSurfaceCsvHeader)
    throw FormatError("surface CSV header mismatch");
  std::vector<SurfaceRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    SurfaceRow r{};
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf,%zu", &r.ratio, &r.epsilon,
                    &r.acc_test_mean, &r.acc_test_std, &r.acc_adv_mean, &r.acc_adv_std,
                    &r.reps) != 7)
      throw FormatError("malformed surface CSV row: " + line);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace advtune
