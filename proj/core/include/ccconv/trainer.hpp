#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "ccconv/cc_layer.hpp"
#include "ccconv/conv_op.hpp"
#include "ccconv/oracles.hpp"

namespace ccconv {

// ---------------------------------------------------------------------------
// Adam

template <typename T>
struct AdamState {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  std::int64_t t = 0;
  std::vector<std::vector<double>> m, v;
};

// Bias-corrected Adam; weight decay is folded into the gradient before the
// moment updates. Returns fresh parameter tensors (requires_grad preserved).
template <typename T>
std::vector<Tensor<T>> adam_step(AdamState<T>& state, const std::vector<Tensor<T>>& params,
                                 const std::vector<Tensor<T>>& grads) {
  if (params.size() != grads.size())
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " params vs " +
                     std::to_string(grads.size()) + " grads");
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(static_cast<std::size_t>(params[i].numel()), 0.0);
      state.v[i].assign(static_cast<std::size_t>(params[i].numel()), 0.0);
    }
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));

  std::vector<Tensor<T>> out;
  out.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape())
      throw ShapeError("adam_step: param " + shape_str(params[i].shape()) + " vs grad " +
                       shape_str(grads[i].shape()));
    Tensor<T> next = Tensor<T>::zeros(params[i].shape(), params[i].requires_grad());
    auto p = params[i].data();
    auto g = grads[i].data();
    auto o = next.data_mut();
    auto& mi = state.m[i];
    auto& vi = state.v[i];
    for (std::size_t j = 0; j < mi.size(); ++j) {
      const double pj = static_cast<double>(p[j]);
      const double gj = static_cast<double>(g[j]) + state.weight_decay * pj;
      mi[j] = state.beta1 * mi[j] + (1.0 - state.beta1) * gj;
      vi[j] = state.beta2 * vi[j] + (1.0 - state.beta2) * gj * gj;
      const double mhat = mi[j] / bc1;
      const double vhat = vi[j] / bc2;
      o[j] = static_cast<T>(pj - state.lr * mhat / (std::sqrt(vhat) + state.eps));
    }
    out.push_back(std::move(next));
  }
  return out;
}

// Copies .grad of every tensor into fresh tensors (zeros when absent).
template <typename T>
std::vector<Tensor<T>> collect_grads(const std::vector<Tensor<T>>& params) {
  std::vector<Tensor<T>> out;
  out.reserve(params.size());
  for (const auto& p : params) {
    Tensor<T> g = Tensor<T>::zeros(p.shape());
    if (p.has_grad()) {
      auto src = p.grad();
      auto dst = g.data_mut();
      std::copy(src.begin(), src.end(), dst.begin());
    }
    out.push_back(std::move(g));
  }
  return out;
}

// ---------------------------------------------------------------------------
// losses

template <typename T>
struct LossValue {
  double value = 0.0;
  Tensor<T> seed;  // dL/d(pred), ready for tape.backward
};

// Mean squared error over the interior (border pixels excluded per axis).
template <typename T>
LossValue<T> masked_mse(const Tensor<T>& pred, const Tensor<T>& target, std::int64_t border) {
  if (pred.shape() != target.shape())
    throw ShapeError("masked_mse: shapes differ, " + shape_str(pred.shape()) + " vs " +
                     shape_str(target.shape()));
  const std::size_t rank = pred.ndim();
  const std::int64_t h = pred.dim(rank - 2), w = pred.dim(rank - 1);
  const std::int64_t outer = pred.numel() / (h * w);
  const std::int64_t bh = std::min(border, (h - 1) / 2);
  const std::int64_t bw = std::min(border, (w - 1) / 2);
  const std::int64_t count = outer * (h - 2 * bh) * (w - 2 * bw);

  LossValue<T> loss;
  loss.seed = Tensor<T>::zeros(pred.shape());
  auto pp = pred.data();
  auto pt = target.data();
  auto ps = loss.seed.data_mut();
  double acc = 0.0;
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t i = bh; i < h - bh; ++i)
      for (std::int64_t j = bw; j < w - bw; ++j) {
        const std::size_t at = static_cast<std::size_t>((o * h + i) * w + j);
        const double d = static_cast<double>(pp[at]) - static_cast<double>(pt[at]);
        acc += d * d;
        ps[at] = static_cast<T>(2.0 * d / static_cast<double>(count));
      }
  loss.value = acc / static_cast<double>(count);
  return loss;
}

// ---------------------------------------------------------------------------
// kernel-imitation training

enum class ScaleLaw { Fixed, UniformRange };

template <typename T>
struct ImitationTask {
  Tensor<T> image;  // [1,C,H,W]
  AnalyticKernel oracle = AnalyticKernel::bicubic();
  ScaleLaw law = ScaleLaw::UniformRange;
  double lo = 0.3, hi = 1.3;
  AxisScale fixed_h = AxisScale::from_float(0.5);
  AxisScale fixed_w = AxisScale::from_float(0.5);
  int iterations = 2000;
  int scale_batch = 1;  // scales averaged per optimizer step
  std::uint64_t seed = 0;
  std::int64_t border = 2;
  double lr = 5e-4;
  // lr multiplier applied for the final fraction of iterations (0 disables)
  double lr_drop = 0.1;
  double lr_drop_at = 0.7;
  double weight_decay = 0.0;
};

template <typename T>
struct TrainResult {
  std::vector<double> losses;
  double train_mse = 0.0;  // mean over the last 10% of iterations
};

template <typename T>
ScaleSpec draw_task_scale(const ImitationTask<T>& task, Rng& rng) {
  const std::int64_t h = task.image.dim(2), w = task.image.dim(3);
  if (task.law == ScaleLaw::Fixed)
    return ScaleSpec::with_default_out(task.fixed_h, task.fixed_w, h, w);
  const double sh = rng.uniform(task.lo, task.hi);
  const double sw = rng.uniform(task.lo, task.hi);
  return ScaleSpec::with_default_out(AxisScale::from_float(sh), AxisScale::from_float(sw), h, w);
}

// One Adam step per iteration: draw a scale, build the oracle target at
// that scale, minimize interior MSE of the CC output. Mutates the layer's
// parameters via functional updates.
template <typename T>
TrainResult<T> train_imitation(const ImitationTask<T>& task, CCLayer<T>& layer) {
  Rng rng(task.seed);
  AdamState<T> adam;
  adam.lr = task.lr;
  adam.weight_decay = task.weight_decay;

  const int batch = std::max(1, task.scale_batch);
  const int drop_iter = task.lr_drop > 0.0 && task.lr_drop < 1.0
                            ? static_cast<int>(task.lr_drop_at * task.iterations)
                            : task.iterations;
  TrainResult<T> result;
  result.losses.reserve(static_cast<std::size_t>(task.iterations));
  for (int iter = 0; iter < task.iterations; ++iter) {
    if (iter == drop_iter) adam.lr = task.lr * task.lr_drop;
    auto params = layer.parameters();
    std::vector<Tensor<T>> grad_sum;
    double loss_sum = 0.0;
    for (int b = 0; b < batch; ++b) {
      ScaleSpec spec = draw_task_scale(task, rng);
      Tensor<T> target = resize(task.image, task.oracle, spec);
      GradTape<T> tape;
      Tensor<T> pred = layer.forward(task.image, spec, &tape);
      LossValue<T> loss = masked_mse(pred, target, task.border);
      if (!std::isfinite(loss.value))
        throw NumericError("train_imitation: non-finite loss at iteration " +
                           std::to_string(iter));
      tape.backward(pred, loss.seed);
      loss_sum += loss.value;
      auto grads = collect_grads(params);
      if (grad_sum.empty()) {
        grad_sum = std::move(grads);
      } else {
        for (std::size_t i = 0; i < grad_sum.size(); ++i) {
          auto dst = grad_sum[i].data_mut();
          auto src = grads[i].data();
          for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
      }
    }
    if (batch > 1)
      for (auto& g : grad_sum)
        for (auto& v : g.data_mut()) v /= static_cast<T>(batch);
    layer.set_parameters(adam_step(adam, params, grad_sum));
    result.losses.push_back(loss_sum / batch);
  }
  if (!result.losses.empty()) {
    std::size_t tail = std::max<std::size_t>(1, result.losses.size() / 10);
    double acc = 0.0;
    for (std::size_t i = result.losses.size() - tail; i < result.losses.size(); ++i)
      acc += result.losses[i];
    result.train_mse = acc / static_cast<double>(tail);
  }
  return result;
}

// ---------------------------------------------------------------------------
// scale-generalization evaluation

struct ScaleError {
  double sh = 0.0, sw = 0.0;
  double mse = 0.0;
};

template <typename T>
struct GeneralizationReport {
  std::vector<ScaleError> per_scale;
  double mean_mse = 0.0;
  double train_mse = 0.0;
  double ratio = 0.0;  // mean test mse / train mse
};

template <typename T>
GeneralizationReport<T> evaluate_generalization(const CCLayer<T>& layer, const Tensor<T>& image,
                                                const AnalyticKernel& oracle, int n_scales,
                                                double lo, double hi, std::uint64_t seed,
                                                double train_mse, std::int64_t border) {
  GeneralizationReport<T> report;
  report.train_mse = train_mse;
  Rng rng(seed);
  const std::int64_t h = image.dim(2), w = image.dim(3);
  for (int i = 0; i < n_scales; ++i) {
    const double sh = rng.uniform(lo, hi);
    const double sw = rng.uniform(lo, hi);
    ScaleSpec spec =
        ScaleSpec::with_default_out(AxisScale::from_float(sh), AxisScale::from_float(sw), h, w);
    Tensor<T> want = resize(image, oracle, spec);
    Tensor<T> got = layer.forward(image, spec);
    report.per_scale.push_back({sh, sw, mse(got, want, border)});
  }
  if (!report.per_scale.empty()) {
    double acc = 0.0;
    for (const auto& e : report.per_scale) acc += e.mse;
    report.mean_mse = acc / static_cast<double>(report.per_scale.size());
    report.ratio = train_mse > 0.0 ? report.mean_mse / train_mse : 0.0;
  }
  return report;
}

// ---------------------------------------------------------------------------
// chains and scale ensembles

template <typename T>
struct CCChain {
  std::vector<CCLayer<T>> layers;
  bool activation_between = true;

  Tensor<T> forward(const Tensor<T>& input, const std::vector<ChainLayer>& specs,
                    GradTape<T>* tape = nullptr) const {
    if (specs.size() != layers.size())
      throw SpecError("cc chain: " + std::to_string(specs.size()) + " specs for " +
                      std::to_string(layers.size()) + " layers");
    Tensor<T> x = input;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      ScaleSpec spec = ScaleSpec::exact(AxisScale::from_rational(specs[i].sh),
                                        AxisScale::from_rational(specs[i].sw), specs[i].out_h,
                                        specs[i].out_w);
      x = layers[i].forward(x, spec, tape);
      if (activation_between && i + 1 != layers.size())
        x = leaky_relu(x, layers[i].net.slope, tape);
    }
    return x;
  }
};

enum class Aggregator { Mean, Median };

// Runs the chain once per member with an independently sampled scale chain
// (every chain multiplies to `target`, so all outputs share one shape) and
// aggregates pixelwise.
template <typename T>
Tensor<T> ensemble_forward(const CCChain<T>& chain, const Tensor<T>& input,
                           const Rational& target, int n_members, std::uint64_t seed,
                           Aggregator aggregator = Aggregator::Mean) {
  if (n_members < 1) throw SpecError("ensemble_forward: n_members must be >= 1");
  Rng rng(seed);
  const int n_layers = static_cast<int>(chain.layers.size());
  const double mean_scale = std::pow(target.value(), 1.0 / static_cast<double>(n_layers));
  std::vector<Tensor<T>> outputs;
  for (int member = 0; member < n_members; ++member) {
    auto specs = sample_scale_chain(n_layers, target, mean_scale, 0.01, 10,
                                    {input.dim(2), input.dim(3)}, rng);
    outputs.push_back(chain.forward(input, specs));
  }
  Tensor<T> out = Tensor<T>::zeros(outputs.front().shape());
  auto po = out.data_mut();
  if (aggregator == Aggregator::Mean) {
    for (const auto& o : outputs) {
      auto p = o.data();
      for (std::size_t i = 0; i < po.size(); ++i) po[i] += p[i];
    }
    for (auto& v : po) v /= static_cast<T>(n_members);
  } else {
    std::vector<T> vals(outputs.size());
    for (std::size_t i = 0; i < po.size(); ++i) {
      for (std::size_t m = 0; m < outputs.size(); ++m) vals[m] = outputs[m].data()[i];
      std::sort(vals.begin(), vals.end());
      const std::size_t mid = vals.size() / 2;
      po[i] = vals.size() % 2 ? vals[mid] : static_cast<T>((vals[mid - 1] + vals[mid]) / T(2));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// trainable discrete conv layer (baseline for the equivariance experiment)

template <typename T>
struct ConvLayer {
  Tensor<T> filter;  // [Co,Ci,kh,kw]
  Tensor<T> bias;    // [1,Co,1,1]
  std::int64_t stride = 1;
  PadMode pad = PadMode::Same;
  BoundaryPolicy fill = BoundaryPolicy::Zero;

  static ConvLayer make(std::int64_t c_in, std::int64_t c_out, std::int64_t k,
                        std::int64_t stride, Rng& rng) {
    ConvLayer layer;
    const double bound = std::sqrt(1.0 / static_cast<double>(c_in * k * k));
    layer.filter = Tensor<T>::zeros({c_out, c_in, k, k}, true);
    for (auto& v : layer.filter.data_mut()) v = static_cast<T>(rng.uniform(-bound, bound));
    layer.bias = Tensor<T>::zeros({1, c_out, 1, 1}, true);
    layer.stride = stride;
    return layer;
  }

  Tensor<T> forward(const Tensor<T>& input, GradTape<T>* tape = nullptr) const {
    Tensor<T> y = discrete_conv_op(input, filter, stride, pad, fill, tape);
    return add(y, bias, tape);
  }

  std::vector<Tensor<T>> parameters() const { return {filter, bias}; }
  void set_parameters(const std::vector<Tensor<T>>& p) {
    filter = p.at(0);
    bias = p.at(1);
  }
};

// ---------------------------------------------------------------------------
// synthetic data

// Smooth random texture in [0,1]: a sum of random sinusoids.
template <typename T>
Tensor<T> synthetic_texture(std::int64_t h, std::int64_t w, Rng& rng, std::int64_t channels = 1) {
  Tensor<T> img = Tensor<T>::zeros({1, channels, h, w});
  auto p = img.data_mut();
  for (std::int64_t c = 0; c < channels; ++c) {
    constexpr int kWaves = 6;
    double fy[kWaves], fx[kWaves], ph[kWaves], amp[kWaves];
    for (int k = 0; k < kWaves; ++k) {
      fy[k] = rng.uniform(0.02, 0.25) * 6.283185307179586;
      fx[k] = rng.uniform(0.02, 0.25) * 6.283185307179586;
      ph[k] = rng.uniform(0.0, 6.283185307179586);
      amp[k] = rng.uniform(0.3, 1.0);
    }
    double lo = 1e30, hi = -1e30;
    std::vector<double> tmp(static_cast<std::size_t>(h * w));
    for (std::int64_t i = 0; i < h; ++i)
      for (std::int64_t j = 0; j < w; ++j) {
        double v = 0.0;
        for (int k = 0; k < kWaves; ++k)
          v += amp[k] * std::sin(fy[k] * static_cast<double>(i) + fx[k] * static_cast<double>(j) +
                                 ph[k]);
        tmp[static_cast<std::size_t>(i * w + j)] = v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    const double range = std::max(hi - lo, 1e-9);
    for (std::int64_t i = 0; i < h * w; ++i)
      p[c * h * w + i] = static_cast<T>((tmp[static_cast<std::size_t>(i)] - lo) / range);
  }
  return img;
}

}  // namespace ccconv
