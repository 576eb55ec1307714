#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ccconv/grid.hpp"
#include "ccconv/internal_net.hpp"
#include "ccconv/tensor.hpp"

namespace ccconv {

enum class ExecMode { Standard, Chunked, RationalFast };

std::string exec_mode_name(ExecMode m);
ExecMode exec_mode_from_name(const std::string& name);

struct CCLayerConfig {
  std::int64_t c_in = 1;
  std::int64_t c_out = 1;
  std::int64_t support_h = 3;
  std::int64_t support_w = 3;
  BoundaryPolicy boundary = BoundaryPolicy::Replicate;
  ExecMode mode = ExecMode::Standard;
  std::int64_t chunk_h = 32;
  std::int64_t chunk_w = 32;
  InputMode input_mode = InputMode::Distances;

  std::int64_t k_count() const { return support_h * support_w; }
  void validate() const;
};

namespace detail {

// Offset tensor fed to the internal net for a given plan: the distance
// tensor [K,2,H',W'] in distances mode, or the grid fractional parts
// [1,2,H',W'] in grid-direct mode.
template <typename T>
Tensor<T> net_offsets(const ProjectedGrid& grid, const IndexPlan& plan, InputMode mode) {
  const std::int64_t ho = plan.out_h, wo = plan.out_w;
  const std::int64_t plane = ho * wo;
  if (mode == InputMode::Distances) {
    Tensor<T> t = Tensor<T>::zeros({plan.k_count(), 2, ho, wo});
    auto p = t.data_mut();
    for (std::size_t i = 0; i < plan.distances.size(); ++i)
      p[i] = static_cast<T>(plan.distances[i]);
    return t;
  }
  Tensor<T> t = Tensor<T>::zeros({1, 2, ho, wo});
  auto p = t.data_mut();
  for (std::int64_t i = 0; i < ho; ++i) {
    double g = grid.v.coords[static_cast<std::size_t>(i)];
    double frac = g - std::floor(g);
    for (std::int64_t j = 0; j < wo; ++j) p[i * wo + j] = static_cast<T>(frac);
  }
  for (std::int64_t j = 0; j < wo; ++j) {
    double g = grid.h.coords[static_cast<std::size_t>(j)];
    double frac = g - std::floor(g);
    for (std::int64_t i = 0; i < ho; ++i) p[plane + i * wo + j] = static_cast<T>(frac);
  }
  return t;
}

template <typename T>
Tensor<T> zero_mask_tensor(const IndexPlan& plan) {
  Tensor<T> m = Tensor<T>::zeros({1, 1, 1, plan.k_count(), plan.out_h, plan.out_w});
  auto p = m.data_mut();
  for (std::size_t i = 0; i < plan.zero_mask.size(); ++i) p[i] = static_cast<T>(plan.zero_mask[i]);
  return m;
}

}  // namespace detail

// One continuous-convolution layer: a learned continuous kernel applied
// through a scale-dependent resampling grid. The output size and scale are
// free per call; only the internal net carries parameters.
template <typename T>
struct CCLayer {
  CCLayerConfig config;
  InternalNetParams<T> net;

  static CCLayer make(CCLayerConfig cfg, Rng& rng, InitSpec init = {},
                      std::vector<std::int64_t> hidden = {16, 16}) {
    cfg.validate();
    CCLayer layer;
    layer.config = cfg;
    layer.net = init_internal_net<T>(cfg.input_mode, cfg.c_in, cfg.c_out, cfg.k_count(), rng,
                                     init, std::move(hidden));
    return layer;
  }

  std::vector<Tensor<T>> parameters() const { return net.parameters(); }
  void set_parameters(const std::vector<Tensor<T>>& p) { net.set_parameters(p); }

  Tensor<T> forward(const Tensor<T>& input, const ScaleSpec& spec,
                    GradTape<T>* tape = nullptr) const;
  Tensor<T> forward_standard(const Tensor<T>& input, const ScaleSpec& spec,
                             GradTape<T>* tape = nullptr) const;
  Tensor<T> forward_rational_fast(const Tensor<T>& input, const ScaleSpec& spec,
                                  GradTape<T>* tape = nullptr) const;
  Tensor<T> forward_chunked(const Tensor<T>& input, const ScaleSpec& spec, std::int64_t chunk_h,
                            std::int64_t chunk_w, GradTape<T>* tape = nullptr) const;

  // Writes distances, resolved indices and the weight tensor of one call as
  // CCT1 files (distances.cct1, indices.cct1, weights.cct1) under dir.
  void dump_trace(const Tensor<T>& input, const ScaleSpec& spec, const std::string& dir) const;

 private:
  void check_input(const Tensor<T>& input) const {
    if (input.ndim() != 4)
      throw ShapeError("cc layer: input must be [N,C,H,W], got " + shape_str(input.shape()));
    if (input.dim(1) != config.c_in)
      throw ShapeError("cc layer: input has " + std::to_string(input.dim(1)) +
                       " channels, layer expects " + std::to_string(config.c_in));
  }
};

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> CCLayer<T>::forward(const Tensor<T>& input, const ScaleSpec& spec,
                              GradTape<T>* tape) const {
  switch (config.mode) {
    case ExecMode::Standard: return forward_standard(input, spec, tape);
    case ExecMode::RationalFast: return forward_rational_fast(input, spec, tape);
    case ExecMode::Chunked:
      return forward_chunked(input, spec, config.chunk_h, config.chunk_w, tape);
  }
  return forward_standard(input, spec, tape);
}

template <typename T>
Tensor<T> CCLayer<T>::forward_standard(const Tensor<T>& input, const ScaleSpec& spec,
                                       GradTape<T>* tape) const {
  check_input(input);
  spec.validate();
  ProjectedGrid grid = projected_grid(input.dim(2), input.dim(3), spec);
  IndexPlan plan = index_plan(grid, config.support_h, config.support_w, config.boundary);

  Tensor<T> neighbors =
      gather_neighbors(input, plan.indices, plan.k_count(), plan.out_h, plan.out_w, tape);
  if (plan.has_mask()) neighbors = mul(neighbors, detail::zero_mask_tensor<T>(plan), tape);

  Tensor<T> offsets = detail::net_offsets<T>(grid, plan, config.input_mode);
  Tensor<T> weights =
      internal_net_weights(net, offsets, config.c_in, config.c_out, config.k_count(), tape);
  return contract_weights(neighbors, weights, tape);
}

// ---------------------------------------------------------------------------
// rational fast path: the grid repeats with period = scale numerator per
// axis, so the net runs on one period of offsets and the result is applied
// as interleaved strided discrete convolutions.

namespace detail {

struct PhaseGeometry {
  std::int64_t num_v = 1, num_h = 1;    // grid period per axis
  std::int64_t den_v = 1, den_h = 1;    // input step between same-phase outputs
  std::int64_t kh = 1, kw = 1;
  std::int64_t in_h = 0, in_w = 0, out_h = 0, out_w = 0;
  std::int64_t batch = 0, c_in = 0, c_out = 0;
  // Resolved tap indices per output row/col: [out][k], with valid flags
  // (invalid taps are skipped; only the Zero policy produces them).
  std::vector<std::int32_t> row_idx, col_idx;
  std::vector<std::uint8_t> row_ok, col_ok;
};

template <typename T>
void phase_conv_forward(const PhaseGeometry& g, std::span<const T> in, std::span<const T> wt,
                        std::span<T> out) {
  const std::int64_t phase_v = std::min(g.num_v, g.out_h), phase_h = std::min(g.num_h, g.out_w);
  const std::int64_t k_count = g.kh * g.kw;
  const std::int64_t wplane = phase_v * phase_h;
  const std::int64_t in_plane = g.in_h * g.in_w;
  for (std::int64_t n = 0; n < g.batch; ++n)
    for (std::int64_t co = 0; co < g.c_out; ++co) {
      T* o = out.data() + (n * g.c_out + co) * g.out_h * g.out_w;
      for (std::int64_t r = 0; r < g.out_h; ++r) {
        const std::int64_t a = r % g.num_v;
        const std::int32_t* ri = g.row_idx.data() + r * g.kh;
        const std::uint8_t* rv = g.row_ok.data() + r * g.kh;
        for (std::int64_t c = 0; c < g.out_w; ++c) {
          const std::int64_t b = c % g.num_h;
          const std::int32_t* ci_ = g.col_idx.data() + c * g.kw;
          const std::uint8_t* cv = g.col_ok.data() + c * g.kw;
          T acc = 0;
          for (std::int64_t ci = 0; ci < g.c_in; ++ci) {
            const T* in_ch = in.data() + (n * g.c_in + ci) * in_plane;
            const T* w_ch = wt.data() + ((co * g.c_in + ci) * k_count) * wplane + a * phase_h + b;
            for (std::int64_t kr = 0; kr < g.kh; ++kr) {
              if (!rv[kr]) continue;
              const T* in_row = in_ch + static_cast<std::int64_t>(ri[kr]) * g.in_w;
              for (std::int64_t kc = 0; kc < g.kw; ++kc) {
                if (!cv[kc]) continue;
                acc += in_row[ci_[kc]] * w_ch[(kr * g.kw + kc) * wplane];
              }
            }
          }
          o[r * g.out_w + c] = acc;
        }
      }
    }
}

template <typename T>
void phase_conv_backward(const PhaseGeometry& g, std::span<const T> in, std::span<const T> wt,
                         std::span<const T> upstream, T* d_in, T* d_wt) {
  const std::int64_t phase_v = std::min(g.num_v, g.out_h), phase_h = std::min(g.num_h, g.out_w);
  const std::int64_t k_count = g.kh * g.kw;
  const std::int64_t wplane = phase_v * phase_h;
  const std::int64_t in_plane = g.in_h * g.in_w;
  for (std::int64_t n = 0; n < g.batch; ++n)
    for (std::int64_t co = 0; co < g.c_out; ++co) {
      const T* up = upstream.data() + (n * g.c_out + co) * g.out_h * g.out_w;
      for (std::int64_t r = 0; r < g.out_h; ++r) {
        const std::int64_t a = r % g.num_v;
        const std::int32_t* ri = g.row_idx.data() + r * g.kh;
        const std::uint8_t* rv = g.row_ok.data() + r * g.kh;
        for (std::int64_t c = 0; c < g.out_w; ++c) {
          const std::int64_t b = c % g.num_h;
          const std::int32_t* ci_ = g.col_idx.data() + c * g.kw;
          const std::uint8_t* cv = g.col_ok.data() + c * g.kw;
          const T u = up[r * g.out_w + c];
          if (u == T(0)) continue;
          for (std::int64_t ci = 0; ci < g.c_in; ++ci) {
            const T* in_ch = in.data() + (n * g.c_in + ci) * in_plane;
            const T* w_ch = wt.data() + ((co * g.c_in + ci) * k_count) * wplane + a * phase_h + b;
            T* din_ch = d_in ? d_in + (n * g.c_in + ci) * in_plane : nullptr;
            T* dw_ch =
                d_wt ? d_wt + ((co * g.c_in + ci) * k_count) * wplane + a * phase_h + b : nullptr;
            for (std::int64_t kr = 0; kr < g.kh; ++kr) {
              if (!rv[kr]) continue;
              const std::int64_t row = ri[kr];
              for (std::int64_t kc = 0; kc < g.kw; ++kc) {
                if (!cv[kc]) continue;
                const std::int64_t k = kr * g.kw + kc;
                if (din_ch) din_ch[row * g.in_w + ci_[kc]] += u * w_ch[k * wplane];
                if (dw_ch) dw_ch[k * wplane] += u * in_ch[row * g.in_w + ci_[kc]];
              }
            }
          }
        }
      }
    }
}

}  // namespace detail

template <typename T>
Tensor<T> CCLayer<T>::forward_rational_fast(const Tensor<T>& input, const ScaleSpec& spec,
                                            GradTape<T>* tape) const {
  check_input(input);
  spec.validate();
  if (!spec.sh.is_rational() || !spec.sw.is_rational())
    throw SpecError("rational_fast mode requires rational scales on both axes");

  const std::int64_t in_h = input.dim(2), in_w = input.dim(3);
  ProjectedGrid grid = projected_grid(in_h, in_w, spec);

  detail::PhaseGeometry geom;
  geom.num_v = spec.sh.rational->num;
  geom.den_v = spec.sh.rational->den;
  geom.num_h = spec.sw.rational->num;
  geom.den_h = spec.sw.rational->den;
  geom.kh = config.support_h;
  geom.kw = config.support_w;
  geom.in_h = in_h;
  geom.in_w = in_w;
  geom.out_h = spec.out_h;
  geom.out_w = spec.out_w;
  geom.batch = input.dim(0);
  geom.c_in = config.c_in;
  geom.c_out = config.c_out;

  const std::int64_t phase_v = std::min(geom.num_v, geom.out_h);
  const std::int64_t phase_h = std::min(geom.num_h, geom.out_w);

  // Resolved tap indices for every output row/col.
  auto build_axis = [&](const AxisGrid& ag, std::int64_t support, std::vector<std::int32_t>& idx,
                        std::vector<std::uint8_t>& okf) {
    idx.resize(static_cast<std::size_t>(ag.out_size * support));
    okf.resize(static_cast<std::size_t>(ag.out_size * support));
    for (std::int64_t n = 0; n < ag.out_size; ++n) {
      std::int64_t start = window_start_exact(ag.coords_exact[static_cast<std::size_t>(n)], support);
      for (std::int64_t t = 0; t < support; ++t) {
        bool ok = true;
        idx[static_cast<std::size_t>(n * support + t)] =
            static_cast<std::int32_t>(resolve_index(start + t, ag.in_size, config.boundary, ok));
        okf[static_cast<std::size_t>(n * support + t)] = ok ? 1 : 0;
      }
    }
  };
  build_axis(grid.v, geom.kh, geom.row_idx, geom.row_ok);
  build_axis(grid.h, geom.kw, geom.col_idx, geom.col_ok);

  // One period of offsets -> one period of weights.
  Tensor<T> offsets;
  if (config.input_mode == InputMode::Distances) {
    offsets = Tensor<T>::zeros({config.k_count(), 2, phase_v, phase_h});
    auto p = offsets.data_mut();
    const std::int64_t plane = phase_v * phase_h;
    for (std::int64_t a = 0; a < geom.kh; ++a)
      for (std::int64_t b = 0; b < geom.kw; ++b) {
        const std::int64_t k = a * geom.kw + b;
        for (std::int64_t i = 0; i < phase_v; ++i) {
          Rational gv = grid.v.coords_exact[static_cast<std::size_t>(i)];
          double dv = grid.v.coords[static_cast<std::size_t>(i)] -
                      static_cast<double>(window_start_exact(gv, geom.kh) + a);
          for (std::int64_t j = 0; j < phase_h; ++j) {
            Rational gh = grid.h.coords_exact[static_cast<std::size_t>(j)];
            double dh = grid.h.coords[static_cast<std::size_t>(j)] -
                        static_cast<double>(window_start_exact(gh, geom.kw) + b);
            p[(k * 2 + 0) * plane + i * phase_h + j] = static_cast<T>(dv);
            p[(k * 2 + 1) * plane + i * phase_h + j] = static_cast<T>(dh);
          }
        }
      }
  } else {
    offsets = Tensor<T>::zeros({1, 2, phase_v, phase_h});
    auto p = offsets.data_mut();
    const std::int64_t plane = phase_v * phase_h;
    for (std::int64_t i = 0; i < phase_v; ++i) {
      double g = grid.v.coords[static_cast<std::size_t>(i)];
      double frac = g - std::floor(g);
      for (std::int64_t j = 0; j < phase_h; ++j) p[i * phase_h + j] = static_cast<T>(frac);
    }
    for (std::int64_t j = 0; j < phase_h; ++j) {
      double g = grid.h.coords[static_cast<std::size_t>(j)];
      double frac = g - std::floor(g);
      for (std::int64_t i = 0; i < phase_v; ++i) p[plane + i * phase_h + j] = static_cast<T>(frac);
    }
  }

  Tensor<T> weights =
      internal_net_weights(net, offsets, config.c_in, config.c_out, config.k_count(), tape);

  bool rg = tape && (input.requires_grad() || weights.requires_grad());
  Tensor<T> out = Tensor<T>::zeros({geom.batch, geom.c_out, geom.out_h, geom.out_w}, rg);
  detail::phase_conv_forward<T>(geom, input.data(), weights.data(), out.data_mut());

  if (rg) {
    tape->push({"phase_conv",
                {input, weights},
                out,
                [input = input, weights = weights, out = out, geom]() mutable {
                  auto up = out.grad();
                  T* d_in = nullptr;
                  T* d_wt = nullptr;
                  if (input.requires_grad()) d_in = input.grad_mut().data();
                  if (weights.requires_grad()) d_wt = weights.grad_mut().data();
                  detail::phase_conv_backward<T>(geom, input.data(), weights.data(), up, d_in,
                                                 d_wt);
                }});
  }
  return out;
}

// ---------------------------------------------------------------------------
// chunked execution: output-space tiles computed one at a time; the
// neighbor and weight tensors of a tile are dropped as soon as the tile is
// written, and rebuilt during backward.

namespace detail {

inline AxisGrid slice_axis(const AxisGrid& g, std::int64_t lo, std::int64_t hi) {
  AxisGrid out;
  out.scale = g.scale;
  out.in_size = g.in_size;
  out.out_size = hi - lo;
  out.coords.assign(g.coords.begin() + lo, g.coords.begin() + hi);
  if (g.exact())
    out.coords_exact.assign(g.coords_exact.begin() + lo, g.coords_exact.begin() + hi);
  return out;
}

}  // namespace detail

template <typename T>
Tensor<T> CCLayer<T>::forward_chunked(const Tensor<T>& input, const ScaleSpec& spec,
                                      std::int64_t chunk_h, std::int64_t chunk_w,
                                      GradTape<T>* tape) const {
  check_input(input);
  spec.validate();
  if (chunk_h < 1 || chunk_w < 1) throw SpecError("chunked mode: chunk dims must be >= 1");

  ProjectedGrid grid = projected_grid(input.dim(2), input.dim(3), spec);
  const std::int64_t out_h = spec.out_h, out_w = spec.out_w;
  const std::int64_t n = input.dim(0), c_out = config.c_out;

  // Owns copies of everything it touches; the backward closure outlives
  // this call.
  auto run_chunk = [config = config, net = net, grid, input](
                       std::int64_t r0, std::int64_t r1, std::int64_t c0, std::int64_t c1,
                       GradTape<T>* chunk_tape) {
    ProjectedGrid sub;
    sub.v = detail::slice_axis(grid.v, r0, r1);
    sub.h = detail::slice_axis(grid.h, c0, c1);
    IndexPlan plan = index_plan(sub, config.support_h, config.support_w, config.boundary);
    Tensor<T> neighbors =
        gather_neighbors(input, plan.indices, plan.k_count(), plan.out_h, plan.out_w, chunk_tape);
    if (plan.has_mask())
      neighbors = mul(neighbors, detail::zero_mask_tensor<T>(plan), chunk_tape);
    Tensor<T> offsets = detail::net_offsets<T>(sub, plan, config.input_mode);
    Tensor<T> weights = internal_net_weights(net, offsets, config.c_in, config.c_out,
                                             config.k_count(), chunk_tape);
    return contract_weights(neighbors, weights, chunk_tape);
  };

  bool rg = tape && (input.requires_grad() ||
                     [&] {
                       for (const auto& s : net.stages)
                         if (s.weight.requires_grad() || s.bias.requires_grad()) return true;
                       return false;
                     }());

  Tensor<T> out = Tensor<T>::zeros({n, c_out, out_h, out_w}, rg);
  {
    auto po = out.data_mut();
    for (std::int64_t r0 = 0; r0 < out_h; r0 += chunk_h)
      for (std::int64_t c0 = 0; c0 < out_w; c0 += chunk_w) {
        const std::int64_t r1 = std::min(out_h, r0 + chunk_h);
        const std::int64_t c1 = std::min(out_w, c0 + chunk_w);
        Tensor<T> chunk = run_chunk(r0, r1, c0, c1, nullptr);
        auto pc = chunk.data();
        const std::int64_t ch = r1 - r0, cw = c1 - c0;
        for (std::int64_t bn = 0; bn < n; ++bn)
          for (std::int64_t co = 0; co < c_out; ++co)
            for (std::int64_t i = 0; i < ch; ++i) {
              const T* src = pc.data() + ((bn * c_out + co) * ch + i) * cw;
              T* dst = po.data() + ((bn * c_out + co) * out_h + r0 + i) * out_w + c0;
              std::copy(src, src + cw, dst);
            }
      }
  }

  if (rg) {
    std::vector<Tensor<T>> inputs = {input};
    for (const auto& s : net.stages) {
      inputs.push_back(s.weight);
      inputs.push_back(s.bias);
    }
    std::vector<Tensor<T>> leaves = inputs;
    tape->push(
        {"cc_chunked",
         inputs,
         out,
         [run_chunk, leaves, out = out, n, c_out, out_h, out_w, chunk_h, chunk_w]() mutable {
           auto up = out.grad();
           // Chunk-local backward passes clear leaf grads, so contributions
           // already present (and the per-chunk sums) are staged aside.
           std::vector<std::vector<T>> stash(leaves.size());
           std::vector<std::vector<T>> accum(leaves.size());
           for (std::size_t i = 0; i < leaves.size(); ++i) {
             if (!leaves[i].requires_grad()) continue;
             accum[i].assign(static_cast<std::size_t>(leaves[i].numel()), T(0));
             if (leaves[i].has_grad()) {
               auto g = leaves[i].grad();
               stash[i].assign(g.begin(), g.end());
             }
           }
           for (std::int64_t r0 = 0; r0 < out_h; r0 += chunk_h)
             for (std::int64_t c0 = 0; c0 < out_w; c0 += chunk_w) {
               const std::int64_t r1 = std::min(out_h, r0 + chunk_h);
               const std::int64_t c1 = std::min(out_w, c0 + chunk_w);
               const std::int64_t ch = r1 - r0, cw = c1 - c0;
               GradTape<T> chunk_tape;
               Tensor<T> chunk = run_chunk(r0, r1, c0, c1, &chunk_tape);
               Tensor<T> seed = Tensor<T>::zeros({n, c_out, ch, cw});
               {
                 auto ps = seed.data_mut();
                 for (std::int64_t bn = 0; bn < n; ++bn)
                   for (std::int64_t co = 0; co < c_out; ++co)
                     for (std::int64_t i = 0; i < ch; ++i) {
                       const T* src =
                           up.data() + ((bn * c_out + co) * out_h + r0 + i) * out_w + c0;
                       T* dst = ps.data() + ((bn * c_out + co) * ch + i) * cw;
                       std::copy(src, src + cw, dst);
                     }
               }
               chunk_tape.backward(chunk, seed);
               for (std::size_t i = 0; i < leaves.size(); ++i) {
                 if (!leaves[i].requires_grad() || !leaves[i].has_grad()) continue;
                 auto g = leaves[i].grad();
                 for (std::size_t j = 0; j < accum[i].size(); ++j) accum[i][j] += g[j];
               }
             }
           for (std::size_t i = 0; i < leaves.size(); ++i) {
             if (!leaves[i].requires_grad()) continue;
             leaves[i].clear_grad();
             auto g = leaves[i].grad_mut();
             for (std::size_t j = 0; j < accum[i].size(); ++j)
               g[j] = accum[i][j] + (stash[i].empty() ? T(0) : stash[i][j]);
           }
         }});
  }
  return out;
}

// Layer serialization: config JSON + CCKP parameters.
template <typename T>
void save_cc_layer(const std::string& dir, const CCLayer<T>& layer);
template <typename T>
CCLayer<T> load_cc_layer(const std::string& dir);

}  // namespace ccconv
