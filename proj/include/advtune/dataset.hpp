#pragma once

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "advtune/errors.hpp"
#include "advtune/rng.hpp"
#include "advtune/tensor.hpp"

namespace advtune {

// Features in [0,1] with a leading sample dimension, plus one class index per
// sample.
struct LabeledSet {
  Tensor features;
  std::vector<int> labels;
  std::size_t class_count = 0;

  std::size_t size() const noexcept { return labels.size(); }

  // Throws InputError if any invariant is violated.
  void validate() const {
    if (labels.empty()) throw InputError("labeled set is empty");
    if (features.rank() < 2 || features.dim(0) != labels.size())
      throw InputError("feature rows (" +
                       std::to_string(features.rank() ? features.dim(0) : 0) +
                       ") do not match label count (" + std::to_string(labels.size()) + ")");
    for (double v : features.values())
      if (!(v >= 0.0 && v <= 1.0)) throw InputError("feature value outside [0,1]");
    for (int y : labels)
      if (y < 0 || static_cast<std::size_t>(y) >= class_count)
        throw InputError("label " + std::to_string(y) + " outside [0, " +
                         std::to_string(class_count) + ")");
  }

  LabeledSet subset(std::span<const std::size_t> rows) const {
    LabeledSet out;
    out.features = features.gather_rows(rows);
    out.labels.reserve(rows.size());
    for (std::size_t r : rows) out.labels.push_back(labels[r]);
    out.class_count = class_count;
    return out;
  }

  // Same samples with the per-sample shape replaced (e.g. [784] -> [1,28,28]).
  LabeledSet reshaped(const Shape& sample_shape) const {
    Shape s{size()};
    s.insert(s.end(), sample_shape.begin(), sample_shape.end());
    if (shape_size(s) != features.size())
      throw DimensionError("cannot reshape " + shape_string(features.shape()) + " to " +
                           shape_string(s));
    LabeledSet out = *this;
    out.features = Tensor(std::move(s), std::vector<double>(features.values().begin(),
                                                            features.values().end()));
    return out;
  }

  friend bool operator==(const LabeledSet&, const LabeledSet&) = default;
};

// ---------------------------------------------------------------------------
// IDX ingestion

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

namespace detail {

struct GzCloser {
  void operator()(gzFile f) const { gzclose(f); }
};
using GzHandle = std::unique_ptr<std::remove_pointer_t<gzFile>, GzCloser>;

// Reads the whole file; transparently inflates gzip input.
inline std::vector<std::uint8_t> read_maybe_gz(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
  GzHandle f(gzopen(path.c_str(), "rb"));
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> out;
  std::array<std::uint8_t, 1 << 16> buf;
  for (;;) {
    const int got = gzread(f.get(), buf.data(), static_cast<unsigned>(buf.size()));
    if (got < 0) throw IoError("read error in " + path.string());
    if (got == 0) break;
    out.insert(out.end(), buf.begin(), buf.begin() + got);
  }
  return out;
}

inline std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t at,
                               const std::string& what) {
  if (at + 4 > bytes.size()) throw FormatError(what + ": truncated header");
  return (std::uint32_t{bytes[at]} << 24) | (std::uint32_t{bytes[at + 1]} << 16) |
         (std::uint32_t{bytes[at + 2]} << 8) | std::uint32_t{bytes[at + 3]};
}

}  // namespace detail

// Parses an IDX image file (magic 0x803, N x rows x cols unsigned bytes) and
// its label file (magic 0x801). Pixels are scaled by 1/255. Features have
// shape [N, rows * cols]; use LabeledSet::reshaped for convolutional input.
inline LabeledSet load_idx(const std::filesystem::path& images_path,
                           const std::filesystem::path& labels_path,
                           std::size_t class_count = 10) {
  const auto img = detail::read_maybe_gz(images_path);
  const auto lab = detail::read_maybe_gz(labels_path);
  const std::string img_name = images_path.string(), lab_name = labels_path.string();

  const std::uint32_t img_magic = detail::read_be32(img, 0, img_name);
  if (img_magic != kIdxImagesMagic)
    throw FormatError(img_name + ": bad image magic number " + std::to_string(img_magic) +
                      " (expected 2051)");
  const std::uint32_t lab_magic = detail::read_be32(lab, 0, lab_name);
  if (lab_magic != kIdxLabelsMagic)
    throw FormatError(lab_name + ": bad label magic number " + std::to_string(lab_magic) +
                      " (expected 2049)");

  const std::size_t n = detail::read_be32(img, 4, img_name);
  const std::size_t rows = detail::read_be32(img, 8, img_name);
  const std::size_t cols = detail::read_be32(img, 12, img_name);
  const std::size_t n_labels = detail::read_be32(lab, 4, lab_name);
  if (n != n_labels)
    throw FormatError("count mismatch: " + std::to_string(n) + " images vs " +
                      std::to_string(n_labels) + " labels");
  if (n == 0 || rows == 0 || cols == 0) throw FormatError(img_name + ": zero-sized dimension");
  const std::size_t pixels = rows * cols;
  if (img.size() < 16 + n * pixels)
    throw FormatError(img_name + ": truncated file, expected " + std::to_string(16 + n * pixels) +
                      " bytes, found " + std::to_string(img.size()));
  if (lab.size() < 8 + n)
    throw FormatError(lab_name + ": truncated file, expected " + std::to_string(8 + n) +
                      " bytes, found " + std::to_string(lab.size()));

  LabeledSet set;
  set.class_count = class_count;
  std::vector<double> values(n * pixels);
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = img[16 + i] / 255.0;
  set.features = Tensor({n, pixels}, std::move(values));
  set.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    set.labels[i] = lab[8 + i];
    if (static_cast<std::size_t>(set.labels[i]) >= class_count)
      throw FormatError(lab_name + ": label " + std::to_string(set.labels[i]) + " at index " +
                        std::to_string(i) + " exceeds class count");
  }
  return set;
}

// ---------------------------------------------------------------------------
// Splits and batching

struct SplitSpec {
  std::size_t validation_count = 0;
  std::size_t test_count = 0;
  std::uint64_t seed = 0;
};

struct Splits {
  LabeledSet train, validation, test;
};

inline std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

// Disjoint, exhaustive partition after a seeded shuffle: the first
// validation_count shuffled indices form the validation set, the next
// test_count the test set, and the rest the training set.
inline Splits split(const LabeledSet& data, const SplitSpec& spec) {
  const std::size_t n = data.size();
  if (spec.validation_count + spec.test_count >= n)
    throw SpecError("validation (" + std::to_string(spec.validation_count) + ") + test (" +
                    std::to_string(spec.test_count) + ") must be smaller than N = " +
                    std::to_string(n));
  if (spec.validation_count == 0 || spec.test_count == 0)
    throw SpecError("validation and test counts must be positive");
  const auto order = seeded_permutation(n, spec.seed);
  const std::span<const std::size_t> all(order);
  Splits s;
  s.validation = data.subset(all.first(spec.validation_count));
  s.test = data.subset(all.subspan(spec.validation_count, spec.test_count));
  s.train = data.subset(all.subspan(spec.validation_count + spec.test_count));
  return s;
}

// Gaussian clusters, one per class, squashed affinely into [0,1]^dims.
// Class centres are drawn uniformly from [-1, 1]^dims.
inline LabeledSet synth_blobs(std::size_t classes, std::size_t per_class, std::size_t dims,
                              double spread, std::uint64_t seed) {
  if (classes == 0 || per_class == 0 || dims == 0)
    throw SpecError("synth_blobs: classes, per_class and dims must be positive");
  if (!(spread >= 0.0)) throw SpecError("synth_blobs: spread must be non-negative");
  Rng rng(seed);
  std::uniform_real_distribution<double> centre_dist(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> centres(classes * dims);
  for (double& c : centres) c = centre_dist(rng);

  const std::size_t n = classes * per_class;
  std::vector<double> raw(n * dims);
  std::vector<int> labels(n);
  // Interleave classes so any prefix is balanced.
  for (std::size_t i = 0; i < per_class; ++i)
    for (std::size_t c = 0; c < classes; ++c) {
      const std::size_t row = i * classes + c;
      labels[row] = static_cast<int>(c);
      for (std::size_t d = 0; d < dims; ++d) {
        const double z = noise(rng);
        raw[row * dims + d] = centres[c * dims + d] + spread * z;
      }
    }
  double lo = *std::min_element(raw.begin(), raw.end());
  double hi = *std::max_element(raw.begin(), raw.end());
  const double range = hi - lo;
  for (double& v : raw)
    v = range > 0.0 ? std::clamp((v - lo) / range, 0.0, 1.0) : 0.5;

  LabeledSet set;
  set.features = Tensor({n, dims}, std::move(raw));
  set.labels = std::move(labels);
  set.class_count = classes;
  return set;
}

// One epoch's batch index lists: a seeded shuffle of all indices cut into
// runs of batch_size, with the final short batch kept.
inline std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                                     std::uint64_t epoch_seed) {
  if (batch_size == 0) throw SpecError("batch size must be positive");
  if (batch_size > n)
    throw SpecError("batch size " + std::to_string(batch_size) + " exceeds N = " +
                    std::to_string(n));
  const auto order = seeded_permutation(n, epoch_seed);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t at = 0; at < n; at += batch_size) {
    const std::size_t end = std::min(n, at + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(at),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

inline std::vector<std::vector<std::size_t>> batches(const LabeledSet& data,
                                                     std::size_t batch_size,
                                                     std::uint64_t epoch_seed) {
  return batches(data.size(), batch_size, epoch_seed);
}

}  // namespace advtune
