#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ccconv/constants.hpp"
#include "ccconv/rng.hpp"
#include "ccconv/tensor.hpp"

namespace ccconv {

enum class InputMode { Distances, GridDirect };

std::string input_mode_name(InputMode m);
InputMode input_mode_from_name(const std::string& name);

enum class InitScheme { UniformFanIn, NormalFanIn };

struct InitSpec {
  InitScheme scheme = InitScheme::UniformFanIn;
  // Variance target for the last-stage biases, matching a discrete filter
  // of the same support: 2 / (c_in * k).
  static double target_bias_variance(std::int64_t c_in, std::int64_t k_count) {
    return 2.0 / static_cast<double>(c_in * k_count);
  }
};

// Stack of 1x1 conv stages with LeakyReLU between them (none after the
// last). Maps 2D sub-pixel offsets to convolution weights.
template <typename T>
struct InternalNetParams {
  struct Stage {
    Tensor<T> weight;  // [c_out, c_in]
    Tensor<T> bias;    // [c_out]
  };
  std::vector<Stage> stages;
  InputMode input_mode = InputMode::Distances;
  T slope = static_cast<T>(constants::kLeakySlope);

  std::int64_t in_channels() const { return stages.front().weight.dim(1); }
  std::int64_t out_channels() const { return stages.back().weight.dim(0); }

  std::vector<Tensor<T>> parameters() const {
    std::vector<Tensor<T>> out;
    for (const auto& s : stages) {
      out.push_back(s.weight);
      out.push_back(s.bias);
    }
    return out;
  }

  void set_parameters(const std::vector<Tensor<T>>& params) {
    if (params.size() != stages.size() * 2)
      throw ShapeError("internal net: wrong parameter count");
    for (std::size_t i = 0; i < stages.size(); ++i) {
      stages[i].weight = params[2 * i];
      stages[i].bias = params[2 * i + 1];
    }
  }

  std::vector<std::int64_t> widths() const {
    std::vector<std::int64_t> w;
    for (const auto& s : stages) w.push_back(s.weight.dim(0));
    return w;
  }
};

// Final channel count required for a CC layer of the given geometry.
inline std::int64_t final_channels(InputMode mode, std::int64_t c_in, std::int64_t c_out,
                                   std::int64_t k_count) {
  return mode == InputMode::Distances ? c_in * c_out : c_in * c_out * k_count;
}

// Builds the stage stack. Hidden widths default to {16, 16}; the last stage
// always has final_channels(...) outputs. Hidden stages use fan-in init;
// the last stage uses down-scaled weights and Normal(0, 2/(c_in*K)) biases
// so the initial output variance matches a discrete conv filter.
template <typename T>
InternalNetParams<T> init_internal_net(InputMode mode, std::int64_t c_in, std::int64_t c_out,
                                       std::int64_t k_count, Rng& rng,
                                       InitSpec init = {},
                                       std::vector<std::int64_t> hidden = {16, 16}) {
  InternalNetParams<T> net;
  net.input_mode = mode;
  std::vector<std::int64_t> widths = std::move(hidden);
  widths.push_back(final_channels(mode, c_in, c_out, k_count));

  const double slope = constants::kLeakySlope;
  std::int64_t fan_in = 2;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const std::int64_t fan_out = widths[i];
    const bool last = i + 1 == widths.size();
    const double gain2 = 2.0 / (1.0 + slope * slope);
    const double std_w = std::sqrt(gain2 / static_cast<double>(fan_in));
    const double scale = last ? constants::kLastStageWeightScale : 1.0;

    Tensor<T> w = Tensor<T>::zeros({fan_out, fan_in}, true);
    {
      auto pw = w.data_mut();
      if (init.scheme == InitScheme::UniformFanIn) {
        const double bound = std::sqrt(3.0) * std_w * scale;
        for (auto& v : pw) v = static_cast<T>(rng.uniform(-bound, bound));
      } else {
        for (auto& v : pw) v = static_cast<T>(rng.normal(0.0, std_w * scale));
      }
    }
    Tensor<T> b = Tensor<T>::zeros({fan_out}, true);
    {
      auto pb = b.data_mut();
      if (last) {
        const double sd = std::sqrt(InitSpec::target_bias_variance(c_in, k_count));
        for (auto& v : pb) v = static_cast<T>(rng.normal(0.0, sd));
      } else {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (auto& v : pb) v = static_cast<T>(rng.uniform(-bound, bound));
      }
    }
    net.stages.push_back({w, b});
    fan_in = fan_out;
  }
  return net;
}

// Runs the stage stack on an offset tensor [B,2,H,W] without reshaping.
template <typename T>
Tensor<T> internal_net_raw(const InternalNetParams<T>& net, const Tensor<T>& offsets,
                           GradTape<T>* tape = nullptr) {
  if (offsets.ndim() != 4 || offsets.dim(1) != 2)
    throw ShapeError("internal net: offsets must be [B,2,H,W], got " +
                     shape_str(offsets.shape()));
  Tensor<T> x = offsets;
  for (std::size_t i = 0; i < net.stages.size(); ++i) {
    x = conv1x1(x, net.stages[i].weight, net.stages[i].bias, tape);
    if (i + 1 != net.stages.size()) x = leaky_relu(x, net.slope, tape);
  }
  return x;
}

namespace detail {

// [K, c_out*c_in, H, W] -> [1, c_out, c_in, K, H, W]
template <typename T>
Tensor<T> weights_from_batched(const Tensor<T>& raw, std::int64_t c_in, std::int64_t c_out,
                               GradTape<T>* tape) {
  const std::int64_t k_count = raw.dim(0);
  const std::int64_t plane = raw.dim(2) * raw.dim(3);
  bool rg = tape && raw.requires_grad();
  Tensor<T> out = Tensor<T>::zeros({1, c_out, c_in, k_count, raw.dim(2), raw.dim(3)}, rg);
  {
    auto pr = raw.data();
    auto po = out.data_mut();
    for (std::int64_t co = 0; co < c_out; ++co)
      for (std::int64_t ci = 0; ci < c_in; ++ci)
        for (std::int64_t k = 0; k < k_count; ++k) {
          const T* src = pr.data() + (k * (c_out * c_in) + co * c_in + ci) * plane;
          T* dst = po.data() + ((co * c_in + ci) * k_count + k) * plane;
          std::copy(src, src + plane, dst);
        }
  }
  if (rg) {
    tape->push({"weights_from_batched",
                {raw},
                out,
                [raw = raw, out = out, c_in, c_out, k_count, plane]() mutable {
                  auto go = out.grad();
                  auto gr = raw.grad_mut();
                  for (std::int64_t co = 0; co < c_out; ++co)
                    for (std::int64_t ci = 0; ci < c_in; ++ci)
                      for (std::int64_t k = 0; k < k_count; ++k) {
                        T* dst = gr.data() + (k * (c_out * c_in) + co * c_in + ci) * plane;
                        const T* src = go.data() + ((co * c_in + ci) * k_count + k) * plane;
                        for (std::int64_t p = 0; p < plane; ++p) dst[p] += src[p];
                      }
                }});
  }
  return out;
}

// [1, c_out*c_in*K, H, W] -> [1, c_out, c_in, K, H, W]
template <typename T>
Tensor<T> weights_from_flat(const Tensor<T>& raw, std::int64_t c_in, std::int64_t c_out,
                            std::int64_t k_count, GradTape<T>* tape) {
  bool rg = tape && raw.requires_grad();
  Tensor<T> out = Tensor<T>::zeros({1, c_out, c_in, k_count, raw.dim(2), raw.dim(3)}, rg);
  {
    auto pr = raw.data();
    auto po = out.data_mut();
    std::copy(pr.begin(), pr.end(), po.begin());
  }
  if (rg) {
    tape->push({"weights_from_flat",
                {raw},
                out,
                [raw = raw, out = out]() mutable {
                  auto go = out.grad();
                  auto gr = raw.grad_mut();
                  for (std::size_t i = 0; i < gr.size(); ++i) gr[i] += go[i];
                }});
  }
  return out;
}

}  // namespace detail

// Full weight computation: offsets -> stage stack -> weight tensor
// [1, c_out, c_in, K, H', W']. Distances mode expects offsets [K,2,H',W']
// (the leading dim is treated as batch); grid-direct mode expects
// [1,2,H',W'].
template <typename T>
Tensor<T> internal_net_weights(const InternalNetParams<T>& net, const Tensor<T>& offsets,
                               std::int64_t c_in, std::int64_t c_out, std::int64_t k_count,
                               GradTape<T>* tape = nullptr) {
  const std::int64_t expected_batch = net.input_mode == InputMode::Distances ? k_count : 1;
  if (offsets.dim(0) != expected_batch)
    throw ShapeError("internal net: offsets batch " + std::to_string(offsets.dim(0)) +
                     " does not match mode (expected " + std::to_string(expected_batch) + ")");
  const std::int64_t want = final_channels(net.input_mode, c_in, c_out, k_count);
  if (net.out_channels() != want)
    throw ShapeError("internal net: final stage has " + std::to_string(net.out_channels()) +
                     " channels, layer needs " + std::to_string(want));
  Tensor<T> raw = internal_net_raw(net, offsets, tape);
  if (net.input_mode == InputMode::Distances)
    return detail::weights_from_batched(raw, c_in, c_out, tape);
  return detail::weights_from_flat(raw, c_in, c_out, k_count, tape);
}

// Evaluates the net on a regular offset grid spanning the support box
// [-extent_v, extent_v] x [-extent_h, extent_h]; returns [C_final, Rh, Rw].
template <typename T>
Tensor<T> sample_kernel(const InternalNetParams<T>& net, std::int64_t res_h, std::int64_t res_w,
                        double extent_v, double extent_h) {
  if (res_h < 2 || res_w < 2) throw SpecError("sample_kernel: resolution must be >= 2");
  Tensor<T> offsets = Tensor<T>::zeros({1, 2, res_h, res_w});
  {
    auto p = offsets.data_mut();
    for (std::int64_t i = 0; i < res_h; ++i) {
      double dv = -extent_v + 2.0 * extent_v * static_cast<double>(i) /
                                  static_cast<double>(res_h - 1);
      for (std::int64_t j = 0; j < res_w; ++j) {
        double dh = -extent_h + 2.0 * extent_h * static_cast<double>(j) /
                                    static_cast<double>(res_w - 1);
        p[i * res_w + j] = static_cast<T>(dv);
        p[res_h * res_w + i * res_w + j] = static_cast<T>(dh);
      }
    }
  }
  Tensor<T> raw = internal_net_raw(net, offsets, static_cast<GradTape<T>*>(nullptr));
  Tensor<T> out = Tensor<T>::zeros({raw.dim(1), res_h, res_w});
  auto pr = raw.data();
  auto po = out.data_mut();
  std::copy(pr.begin(), pr.end(), po.begin());
  return out;
}

// Checkpoint I/O (CCKP plus a JSON sidecar describing mode and widths).
template <typename T>
void save_internal_net(const std::string& path, const InternalNetParams<T>& net);
template <typename T>
InternalNetParams<T> load_internal_net(const std::string& path);

}  // namespace ccconv
