#pragma once

// Minimal feed-forward network engine: a fixed menu of layers (Dense, ReLU,
// 3x3 Conv2D, 2x2 MaxPool, Flatten) with a softmax cross-entropy head and
// hand-written reverse-mode gradients for both the parameters and the input.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "advtune/errors.hpp"
#include "advtune/kernels.hpp"
#include "advtune/rng.hpp"
#include "advtune/tensor.hpp"

namespace advtune {

struct Dense {
  std::size_t in = 0;
  std::size_t out = 0;
  friend bool operator==(const Dense&, const Dense&) = default;
};
struct ReLU {
  friend bool operator==(const ReLU&, const ReLU&) = default;
};
// 3x3 kernel, stride 1, no padding.
struct Conv2D {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  friend bool operator==(const Conv2D&, const Conv2D&) = default;
};
// 2x2 window, stride 2; odd trailing rows/columns are dropped.
struct MaxPool {
  friend bool operator==(const MaxPool&, const MaxPool&) = default;
};
struct Flatten {
  friend bool operator==(const Flatten&, const Flatten&) = default;
};

using Layer = std::variant<Dense, ReLU, Conv2D, MaxPool, Flatten>;

inline constexpr std::size_t kConvKernel = 3;

inline std::string layer_name(const Layer& layer) {
  return std::visit(
      [](const auto& l) -> std::string {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, Dense>) return "dense";
        else if constexpr (std::is_same_v<T, ReLU>) return "relu";
        else if constexpr (std::is_same_v<T, Conv2D>) return "conv2d";
        else if constexpr (std::is_same_v<T, MaxPool>) return "maxpool";
        else return "flatten";
      },
      layer);
}

struct NetworkSpec {
  Shape input_shape;  // per-sample, e.g. {784} or {1, 28, 28}
  std::vector<Layer> layers;
  std::size_t classes = 0;
  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

// Per-sample activation shapes: shapes[0] is the input, shapes[i + 1] the
// output of layers[i].
struct ShapePlan {
  std::vector<Shape> shapes;
  std::size_t input_size() const { return shape_size(shapes.front()); }
  std::size_t output_size() const { return shape_size(shapes.back()); }
};

inline ShapePlan plan_shapes(const NetworkSpec& spec) {
  if (spec.input_shape.empty()) throw SpecError("network input shape is empty");
  for (std::size_t d : spec.input_shape)
    if (d == 0) throw SpecError("network input dimensions must be positive");
  if (spec.layers.empty()) throw SpecError("network has no layers");

  ShapePlan plan;
  plan.shapes.push_back(spec.input_shape);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const Shape& in = plan.shapes.back();
    auto fail = [&](const std::string& why) -> SpecError {
      return SpecError("layer " + std::to_string(i) + " (" + layer_name(spec.layers[i]) +
                       "): " + why + "; incoming shape " + shape_string(in));
    };
    Shape out = std::visit(
        [&](const auto& l) -> Shape {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, Dense>) {
            if (l.in == 0 || l.out == 0) throw fail("dense sizes must be positive");
            if (in.size() != 1 || in[0] != l.in)
              throw fail("dense expects a flat input of width " + std::to_string(l.in));
            return {l.out};
          } else if constexpr (std::is_same_v<T, ReLU>) {
            return in;
          } else if constexpr (std::is_same_v<T, Conv2D>) {
            if (l.in_channels == 0 || l.out_channels == 0)
              throw fail("conv2d channel counts must be positive");
            if (in.size() != 3 || in[0] != l.in_channels)
              throw fail("conv2d expects [" + std::to_string(l.in_channels) + ",H,W]");
            if (in[1] < kConvKernel || in[2] < kConvKernel)
              throw fail("conv2d input smaller than the 3x3 kernel");
            return {l.out_channels, in[1] - kConvKernel + 1, in[2] - kConvKernel + 1};
          } else if constexpr (std::is_same_v<T, MaxPool>) {
            if (in.size() != 3 || in[1] < 2 || in[2] < 2)
              throw fail("maxpool expects [C,H,W] with H,W >= 2");
            return {in[0], in[1] / 2, in[2] / 2};
          } else {
            return {shape_size(in)};
          }
        },
        spec.layers[i]);
    plan.shapes.push_back(std::move(out));
  }
  const Shape& last = plan.shapes.back();
  if (last.size() != 1 || last[0] != spec.classes)
    throw SpecError("network output shape " + shape_string(last) +
                    " does not match class count " + std::to_string(spec.classes));
  return plan;
}

struct LayerParams {
  Tensor weight;  // Dense: [in, out]; Conv2D: [out_ch, in_ch, 3, 3]; else empty
  Tensor bias;    // [out] / [out_ch]; else empty
  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

// Trainable parameters theta, one entry per layer (empty for layers without
// weights).
struct Params {
  std::vector<LayerParams> layers;

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }

  // Flat view in layer order, weight before bias.
  std::vector<double> flatten() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (const auto& l : layers) {
      flat.insert(flat.end(), l.weight.values().begin(), l.weight.values().end());
      flat.insert(flat.end(), l.bias.values().begin(), l.bias.values().end());
    }
    return flat;
  }

  void assign_flat(std::span<const double> flat) {
    if (flat.size() != parameter_count())
      throw DimensionError("flat parameter vector has " + std::to_string(flat.size()) +
                           " values, expected " + std::to_string(parameter_count()));
    std::size_t at = 0;
    for (auto& l : layers) {
      for (double& v : l.weight.values()) v = flat[at++];
      for (double& v : l.bias.values()) v = flat[at++];
    }
  }

  friend bool operator==(const Params&, const Params&) = default;
};

// Zero-filled parameters with the shapes the spec implies.
inline Params zero_params(const NetworkSpec& spec) {
  plan_shapes(spec);
  Params p;
  p.layers.resize(spec.layers.size());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (const auto* d = std::get_if<Dense>(&spec.layers[i])) {
      p.layers[i].weight = Tensor({d->in, d->out});
      p.layers[i].bias = Tensor({d->out});
    } else if (const auto* c = std::get_if<Conv2D>(&spec.layers[i])) {
      p.layers[i].weight = Tensor({c->out_channels, c->in_channels, kConvKernel, kConvKernel});
      p.layers[i].bias = Tensor({c->out_channels});
    }
  }
  return p;
}

// He-normal weights for layers immediately followed by ReLU, Glorot-uniform
// otherwise; zero biases. Each layer draws from its own seeded stream.
inline Params init_network(const NetworkSpec& spec, std::uint64_t seed) {
  Params p = zero_params(spec);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    Tensor& w = p.layers[i].weight;
    if (w.empty()) continue;
    std::size_t fan_in = 0, fan_out = 0;
    if (const auto* d = std::get_if<Dense>(&spec.layers[i])) {
      fan_in = d->in;
      fan_out = d->out;
    } else {
      const auto& c = std::get<Conv2D>(spec.layers[i]);
      fan_in = c.in_channels * kConvKernel * kConvKernel;
      fan_out = c.out_channels * kConvKernel * kConvKernel;
    }
    const bool feeds_relu =
        i + 1 < spec.layers.size() && std::holds_alternative<ReLU>(spec.layers[i + 1]);
    Rng rng(derive_seed(seed, {stream::kInit, i}));
    if (feeds_relu) {
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
      for (double& v : w.values()) v = dist(rng);
    } else {
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (double& v : w.values()) v = dist(rng);
    }
  }
  return p;
}

struct GradientBundle {
  Params param_grads;   // same shapes as Params; empty layers when not requested
  Tensor input_grads;   // same shape as the input batch; empty when not requested
  double loss = 0.0;    // mean softmax cross-entropy over the batch
};

struct GradientRequest {
  bool params = true;
  bool inputs = true;
};

namespace detail {

inline void check_batch(const ShapePlan& plan, const Tensor& batch) {
  const Shape& in = plan.shapes.front();
  bool ok = batch.rank() == in.size() + 1;
  for (std::size_t i = 0; ok && i < in.size(); ++i) ok = batch.dim(i + 1) == in[i];
  if (!ok)
    throw DimensionError("batch shape " + shape_string(batch.shape()) +
                         " does not match network input " + shape_string(in) +
                         " with a leading batch dimension");
}

// Activations retained for the backward pass.
struct Trace {
  std::size_t batch = 0;
  std::vector<std::vector<double>> acts;  // acts[i] = input to layer i; acts.back() = logits
  std::vector<std::vector<double>> cols;  // im2col buffers for conv layers
  std::vector<std::vector<std::uint32_t>> argmax;  // maxpool winners (input offsets)
};

// Per-thread scratch reused across calls; large activation buffers would
// otherwise be freshly mapped (and page-faulted) on every forward pass.
struct Workspace {
  Trace trace;
  std::vector<double> grad, dx, dcols;
};

inline Workspace& workspace() {
  thread_local Workspace ws;
  return ws;
}

inline void im2col(const double* in, std::size_t channels, std::size_t height, std::size_t width,
                   double* cols) {
  const std::size_t oh = height - kConvKernel + 1, ow = width - kConvKernel + 1;
  const std::size_t p = oh * ow;
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t ky = 0; ky < kConvKernel; ++ky)
      for (std::size_t kx = 0; kx < kConvKernel; ++kx) {
        double* dst = cols + ((c * kConvKernel + ky) * kConvKernel + kx) * p;
        for (std::size_t y = 0; y < oh; ++y) {
          const double* src = in + (c * height + y + ky) * width + kx;
          std::copy(src, src + ow, dst + y * ow);
        }
      }
}

inline void col2im_acc(const double* cols, std::size_t channels, std::size_t height,
                       std::size_t width, double* in) {
  const std::size_t oh = height - kConvKernel + 1, ow = width - kConvKernel + 1;
  const std::size_t p = oh * ow;
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t ky = 0; ky < kConvKernel; ++ky)
      for (std::size_t kx = 0; kx < kConvKernel; ++kx) {
        const double* src = cols + ((c * kConvKernel + ky) * kConvKernel + kx) * p;
        for (std::size_t y = 0; y < oh; ++y) {
          double* dst = in + (c * height + y + ky) * width + kx;
          for (std::size_t x = 0; x < ow; ++x) dst[x] += src[y * ow + x];
        }
      }
}

inline void run_forward(const Params& params, const NetworkSpec& spec, const ShapePlan& plan,
                        std::span<const double> input, std::size_t batch, Trace& trace) {
  const std::size_t n_layers = spec.layers.size();
  trace.batch = batch;
  trace.acts.resize(n_layers + 1);
  trace.cols.resize(n_layers);
  trace.argmax.resize(n_layers);
  trace.acts[0].assign(input.begin(), input.end());

  for (std::size_t li = 0; li < n_layers; ++li) {
    const Shape& in_shape = plan.shapes[li];
    const Shape& out_shape = plan.shapes[li + 1];
    const std::size_t in_size = shape_size(in_shape), out_size = shape_size(out_shape);
    const std::vector<double>& x = trace.acts[li];
    std::vector<double>& y = trace.acts[li + 1];
    y.resize(batch * out_size);  // every layer writes all outputs
    const LayerParams& lp = params.layers[li];

    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, Dense>) {
            for (std::size_t b = 0; b < batch; ++b)
              std::copy(lp.bias.data(), lp.bias.data() + out_size, y.data() + b * out_size);
            kernels::gemm_nn_acc(x.data(), lp.weight.data(), y.data(), batch, in_size, out_size);
          } else if constexpr (std::is_same_v<T, ReLU>) {
            for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
          } else if constexpr (std::is_same_v<T, Conv2D>) {
            const std::size_t k = in_shape[0] * kConvKernel * kConvKernel;
            const std::size_t p = out_shape[1] * out_shape[2];
            std::vector<double>& cols = trace.cols[li];
            cols.resize(batch * k * p);
            for (std::size_t b = 0; b < batch; ++b) {
              double* cb = cols.data() + b * k * p;
              im2col(x.data() + b * in_size, in_shape[0], in_shape[1], in_shape[2], cb);
              double* yb = y.data() + b * out_size;
              for (std::size_t co = 0; co < l.out_channels; ++co)
                std::fill(yb + co * p, yb + (co + 1) * p, lp.bias[co]);
              kernels::gemm_nn_acc(lp.weight.data(), cb, yb, l.out_channels, k, p);
            }
          } else if constexpr (std::is_same_v<T, MaxPool>) {
            const std::size_t c_dim = in_shape[0], h = in_shape[1], w = in_shape[2];
            const std::size_t oh = out_shape[1], ow = out_shape[2];
            std::vector<std::uint32_t>& arg = trace.argmax[li];
            arg.resize(batch * out_size);
            for (std::size_t b = 0; b < batch; ++b)
              for (std::size_t c = 0; c < c_dim; ++c)
                for (std::size_t oy = 0; oy < oh; ++oy)
                  for (std::size_t ox = 0; ox < ow; ++ox) {
                    std::size_t best = (c * h + 2 * oy) * w + 2 * ox;
                    const double* xb = x.data() + b * in_size;
                    for (std::size_t dy = 0; dy < 2; ++dy)
                      for (std::size_t dx = 0; dx < 2; ++dx) {
                        const std::size_t at = (c * h + 2 * oy + dy) * w + 2 * ox + dx;
                        if (xb[at] > xb[best]) best = at;
                      }
                    const std::size_t o = b * out_size + (c * oh + oy) * ow + ox;
                    y[o] = xb[best];
                    arg[o] = static_cast<std::uint32_t>(best);
                  }
          } else {
            y = x;
          }
        },
        spec.layers[li]);
  }
}

// Sum of per-sample cross-entropies; d_logits (if given) receives the
// gradient of that sum scaled by `scale`.
inline double softmax_xent_sum(std::span<const double> logits, std::span<const int> labels,
                               std::size_t classes, double scale, std::vector<double>* d_logits) {
  const std::size_t batch = labels.size();
  if (d_logits) d_logits->resize(logits.size());
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* z = logits.data() + b * classes;
    const double zmax = *std::max_element(z, z + classes);
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) sum += std::exp(z[c] - zmax);
    const auto y = static_cast<std::size_t>(labels[b]);
    // Both terms are non-negative, so the loss is too.
    total += (zmax - z[y]) + std::log(sum);
    if (d_logits) {
      double* g = d_logits->data() + b * classes;
      for (std::size_t c = 0; c < classes; ++c) g[c] = std::exp(z[c] - zmax) / sum * scale;
      g[y] -= scale;
    }
  }
  return total;
}

inline void check_labels(std::span<const int> labels, std::size_t batch, std::size_t classes) {
  if (labels.size() != batch)
    throw InputError("got " + std::to_string(labels.size()) + " labels for a batch of " +
                     std::to_string(batch));
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes)
      throw InputError("label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                       " outside [0, " + std::to_string(classes) + ")");
}

// Samples per pass so the retained activations of one pass stay near L2
// size. Every kernel accumulates over samples in ascending order, so the
// result does not depend on this choice.
inline std::size_t samples_per_pass(const ShapePlan& plan) {
  std::size_t per_sample = 0;
  for (const Shape& s : plan.shapes) per_sample += 3 * shape_size(s);
  per_sample = std::max<std::size_t>(per_sample * sizeof(double), 1);
  return std::clamp<std::size_t>((std::size_t{1} << 20) / per_sample, 1, 64);
}

// Backpropagates `grad` (gradient w.r.t. the logits of the traced samples)
// through every layer, accumulating parameter gradients into `param_grads`
// when given. Leaves the input gradient in `grad` when want_inputs is set.
inline void backward(const Params& params, const NetworkSpec& spec, const ShapePlan& plan,
                     const Trace& trace, Workspace& ws, std::vector<double>& grad,
                     Params* param_grads, bool want_inputs) {
  const std::size_t n = trace.batch;
  for (std::size_t li = spec.layers.size(); li-- > 0;) {
    const bool need_dx = li > 0 || want_inputs;
    if (!need_dx && !param_grads) break;
    const Shape& in_shape = plan.shapes[li];
    const Shape& out_shape = plan.shapes[li + 1];
    const std::size_t in_size = shape_size(in_shape), out_size = shape_size(out_shape);
    const std::vector<double>& x = trace.acts[li];
    const LayerParams& lp = params.layers[li];
    LayerParams* gp = param_grads ? &param_grads->layers[li] : nullptr;
    std::vector<double>& dx = ws.dx;
    if (need_dx) dx.assign(n * in_size, 0.0);

    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, Dense>) {
            if (gp) {
              kernels::gemm_tn_acc(x.data(), grad.data(), gp->weight.data(), n, in_size,
                                   out_size);
              for (std::size_t b = 0; b < n; ++b)
                for (std::size_t o = 0; o < out_size; ++o) gp->bias[o] += grad[b * out_size + o];
            }
            if (need_dx)
              kernels::gemm_nt_acc(grad.data(), lp.weight.data(), dx.data(), n, out_size, in_size);
          } else if constexpr (std::is_same_v<T, ReLU>) {
            if (need_dx)
              for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = x[i] > 0.0 ? grad[i] : 0.0;
          } else if constexpr (std::is_same_v<T, Conv2D>) {
            const std::size_t k = in_shape[0] * kConvKernel * kConvKernel;
            const std::size_t p = out_shape[1] * out_shape[2];
            const std::vector<double>& cols = trace.cols[li];
            std::vector<double>& dcols = ws.dcols;
            dcols.resize(need_dx ? k * p : 0);
            for (std::size_t b = 0; b < n; ++b) {
              const double* gb = grad.data() + b * out_size;
              if (gp) {
                kernels::gemm_nt_acc(gb, cols.data() + b * k * p, gp->weight.data(),
                                     l.out_channels, p, k);
                for (std::size_t co = 0; co < l.out_channels; ++co) {
                  double s = 0.0;
                  for (std::size_t i = 0; i < p; ++i) s += gb[co * p + i];
                  gp->bias[co] += s;
                }
              }
              if (need_dx) {
                std::fill(dcols.begin(), dcols.end(), 0.0);
                kernels::gemm_tn_acc(lp.weight.data(), gb, dcols.data(), l.out_channels, k, p);
                col2im_acc(dcols.data(), in_shape[0], in_shape[1], in_shape[2],
                           dx.data() + b * in_size);
              }
            }
          } else if constexpr (std::is_same_v<T, MaxPool>) {
            if (need_dx) {
              const std::vector<std::uint32_t>& arg = trace.argmax[li];
              for (std::size_t b = 0; b < n; ++b)
                for (std::size_t o = 0; o < out_size; ++o)
                  dx[b * in_size + arg[b * out_size + o]] += grad[b * out_size + o];
            }
          } else {
            if (need_dx) std::copy(grad.begin(), grad.end(), dx.begin());
          }
        },
        spec.layers[li]);
    std::swap(grad, dx);
  }
}

}  // namespace detail

inline Tensor forward(const Params& params, const NetworkSpec& spec, const Tensor& batch) {
  const ShapePlan plan = plan_shapes(spec);
  detail::check_batch(plan, batch);
  const std::size_t n = batch.dim(0), in_size = plan.input_size();
  const std::size_t pass = detail::samples_per_pass(plan);
  detail::Trace& trace = detail::workspace().trace;
  Tensor logits({n, spec.classes});
  for (std::size_t s0 = 0; s0 < n; s0 += pass) {
    const std::size_t cnt = std::min(pass, n - s0);
    detail::run_forward(params, spec, plan, batch.values().subspan(s0 * in_size, cnt * in_size),
                        cnt, trace);
    std::copy(trace.acts.back().begin(), trace.acts.back().end(),
              logits.values().begin() + static_cast<std::ptrdiff_t>(s0 * spec.classes));
  }
  return logits;
}

// Mean softmax cross-entropy without gradients.
inline double mean_loss(const Params& params, const NetworkSpec& spec, const Tensor& batch,
                        std::span<const int> labels) {
  const ShapePlan plan = plan_shapes(spec);
  detail::check_batch(plan, batch);
  detail::check_labels(labels, batch.dim(0), spec.classes);
  const Tensor logits = forward(params, spec, batch);
  return detail::softmax_xent_sum(logits.values(), labels, spec.classes, 0.0, nullptr) /
         static_cast<double>(batch.dim(0));
}

// Loss plus the requested subset of gradients. Skipping parameter gradients
// is what PGD uses; skipping input gradients is what training uses.
inline GradientBundle compute_gradients(const Params& params, const NetworkSpec& spec,
                                        const Tensor& batch, std::span<const int> labels,
                                        GradientRequest want) {
  const ShapePlan plan = plan_shapes(spec);
  detail::check_batch(plan, batch);
  const std::size_t n = batch.dim(0), in_size = plan.input_size();
  detail::check_labels(labels, n, spec.classes);
  const double inv_batch = 1.0 / static_cast<double>(n);

  detail::Workspace& ws = detail::workspace();
  GradientBundle out;
  if (want.params) out.param_grads = zero_params(spec);
  else out.param_grads.layers.resize(spec.layers.size());
  std::vector<double> input_grads;
  if (want.inputs) input_grads.resize(n * in_size);

  double total = 0.0;
  const std::size_t pass = detail::samples_per_pass(plan);
  for (std::size_t s0 = 0; s0 < n; s0 += pass) {
    const std::size_t cnt = std::min(pass, n - s0);
    detail::run_forward(params, spec, plan, batch.values().subspan(s0 * in_size, cnt * in_size),
                        cnt, ws.trace);
    total += detail::softmax_xent_sum(ws.trace.acts.back(), labels.subspan(s0, cnt),
                                      spec.classes, inv_batch, &ws.grad);
    detail::backward(params, spec, plan, ws.trace, ws, ws.grad,
                     want.params ? &out.param_grads : nullptr, want.inputs);
    if (want.inputs)
      std::copy(ws.grad.begin(), ws.grad.end(),
                input_grads.begin() + static_cast<std::ptrdiff_t>(s0 * in_size));
  }
  out.loss = total * inv_batch;
  if (want.inputs) out.input_grads = Tensor(batch.shape(), std::move(input_grads));
  return out;
}

// Mean softmax cross-entropy with exact gradients for parameters and inputs.
inline GradientBundle loss_forward_backward(const Params& params, const NetworkSpec& spec,
                                            const Tensor& batch, std::span<const int> labels) {
  return compute_gradients(params, spec, batch, labels, {.params = true, .inputs = true});
}

// theta <- theta - lr * grad, elementwise. Rejects non-finite gradients and
// reports the first offending layer.
inline Params sgd_update(Params params, const GradientBundle& grads, double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr))
    throw SpecError("learning rate must be finite and non-negative");
  if (grads.param_grads.layers.size() != params.layers.size())
    throw DimensionError("gradient bundle has " + std::to_string(grads.param_grads.layers.size()) +
                         " layers, params have " + std::to_string(params.layers.size()));
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    const LayerParams& g = grads.param_grads.layers[li];
    LayerParams& p = params.layers[li];
    if (g.weight.shape() != p.weight.shape() || g.bias.shape() != p.bias.shape())
      throw DimensionError("gradient shape mismatch at layer " + std::to_string(li));
    for (double v : g.weight.values())
      if (!std::isfinite(v))
        throw NumericError("non-finite weight gradient in layer " + std::to_string(li),
                           static_cast<std::ptrdiff_t>(li));
    for (double v : g.bias.values())
      if (!std::isfinite(v))
        throw NumericError("non-finite bias gradient in layer " + std::to_string(li),
                           static_cast<std::ptrdiff_t>(li));
  }
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    const LayerParams& g = grads.param_grads.layers[li];
    LayerParams& p = params.layers[li];
    for (std::size_t i = 0; i < p.weight.size(); ++i) p.weight[i] -= lr * g.weight[i];
    for (std::size_t i = 0; i < p.bias.size(); ++i) p.bias[i] -= lr * g.bias[i];
  }
  return params;
}

}  // namespace advtune
