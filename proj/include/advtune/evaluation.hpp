#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "advtune/dataset.hpp"
#include "advtune/errors.hpp"
#include "advtune/network.hpp"
#include "advtune/pgd.hpp"

namespace advtune {

struct EvalResult {
  double acc_test = 0.0;  // clean accuracy
  double acc_adv = 0.0;   // accuracy on PGD examples (robustness)
  double eval_epsilon = 0.0;
  std::size_t clean_samples = 0;
  std::size_t adversarial_samples = 0;
};

// Index of the largest logit; ties go to the lowest class index.
inline std::size_t argmax_row(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < row.size(); ++c)
    if (row[c] > row[best]) best = c;
  return best;
}

namespace detail {

inline std::vector<bool> correct_mask(const Params& params, const NetworkSpec& spec,
                                      const LabeledSet& data, std::size_t chunk = 512) {
  if (data.size() == 0) throw InputError("cannot evaluate on an empty set");
  std::vector<bool> ok(data.size());
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t end = std::min(data.size(), start + chunk);
    rows.resize(end - start);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = start + i;
    const Tensor logits = forward(params, spec, data.features.gather_rows(rows));
    for (std::size_t i = 0; i < rows.size(); ++i)
      ok[start + i] = argmax_row(logits.row(i)) == static_cast<std::size_t>(data.labels[start + i]);
  }
  return ok;
}

inline double fraction(const std::vector<bool>& ok) {
  return static_cast<double>(std::count(ok.begin(), ok.end(), true)) /
         static_cast<double>(ok.size());
}

}  // namespace detail

inline double clean_accuracy(const Params& params, const NetworkSpec& spec,
                             const LabeledSet& data, std::size_t chunk = 512) {
  return detail::fraction(detail::correct_mask(params, spec, data, chunk));
}

// Fraction of examples classified correctly both clean and after the PGD
// attack. The clean point lies inside the threat ball, so an example the model
// already gets wrong is never credited back by an attack that happens to land
// on the right class. The attack epsilon is the evaluation epsilon,
// independent of how the model was trained.
inline double adversarial_accuracy(const Params& params, const NetworkSpec& spec,
                                   const LabeledSet& data, const AttackConfig& attack) {
  std::vector<bool> ok = detail::correct_mask(params, spec, data);
  const std::vector<bool> adv =
      detail::correct_mask(params, spec, attack_accuracy_inputs(data, params, spec, attack));
  for (std::size_t i = 0; i < ok.size(); ++i) ok[i] = ok[i] && adv[i];
  return detail::fraction(ok);
}

inline EvalResult evaluate(const Params& params, const NetworkSpec& spec, const LabeledSet& data,
                           const AttackConfig& attack) {
  EvalResult r;
  r.acc_test = clean_accuracy(params, spec, data);
  r.acc_adv = adversarial_accuracy(params, spec, data, attack);
  r.eval_epsilon = attack.epsilon;
  r.clean_samples = data.size();
  r.adversarial_samples = data.size();
  return r;
}

}  // namespace advtune
