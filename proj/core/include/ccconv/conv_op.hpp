#pragma once

#include "ccconv/oracles.hpp"
#include "ccconv/tensor.hpp"

namespace ccconv {

// Differentiable strided cross-correlation (gradients w.r.t. input and
// filter). Same output-size and padding conventions as discrete_conv; kept
// as a separate implementation so the pure oracle stays an independent
// cross-check.
template <typename T>
Tensor<T> discrete_conv_op(const Tensor<T>& input, const Tensor<T>& filter, std::int64_t stride,
                           PadMode pad, BoundaryPolicy fill, GradTape<T>* tape = nullptr) {
  if (input.ndim() != 4 || filter.ndim() != 4)
    throw ShapeError("discrete_conv_op: expected input [N,C,H,W] and filter [Co,Ci,kh,kw], got " +
                     shape_str(input.shape()) + " and " + shape_str(filter.shape()));
  const std::int64_t n = input.dim(0), cin = input.dim(1);
  const std::int64_t h = input.dim(2), w = input.dim(3);
  const std::int64_t cout = filter.dim(0);
  const std::int64_t kh = filter.dim(2), kw = filter.dim(3);
  if (filter.dim(1) != cin)
    throw ShapeError("discrete_conv_op: filter expects " + std::to_string(filter.dim(1)) +
                     " input channels, got " + std::to_string(cin));
  if (stride < 1) throw SpecError("discrete_conv_op: stride must be >= 1");

  std::int64_t pad_top = 0, pad_left = 0, out_h, out_w;
  if (pad == PadMode::Valid) {
    if (h < kh || w < kw)
      throw ShapeError("discrete_conv_op: filter larger than input");
    out_h = (h - kh) / stride + 1;
    out_w = (w - kw) / stride + 1;
  } else {
    out_h = (h + stride - 1) / stride;
    out_w = (w + stride - 1) / stride;
    pad_top = std::max<std::int64_t>(0, ((out_h - 1) * stride + kh - h) / 2);
    pad_left = std::max<std::int64_t>(0, ((out_w - 1) * stride + kw - w) / 2);
  }

  // Resolved tap indices per output position and tap (valid flag for Zero).
  auto build_axis = [&](std::int64_t out, std::int64_t k, std::int64_t pad_lo, std::int64_t size,
                        std::vector<std::int32_t>& idx, std::vector<std::uint8_t>& okf) {
    idx.resize(static_cast<std::size_t>(out * k));
    okf.resize(static_cast<std::size_t>(out * k));
    for (std::int64_t o = 0; o < out; ++o)
      for (std::int64_t t = 0; t < k; ++t) {
        const std::int64_t m = o * stride - pad_lo + t;
        bool ok = true;
        std::int64_t r = resolve_index(m, size, fill, ok);
        idx[static_cast<std::size_t>(o * k + t)] = static_cast<std::int32_t>(r);
        okf[static_cast<std::size_t>(o * k + t)] = ok ? 1 : 0;
      }
  };
  std::vector<std::int32_t> ridx, cidx;
  std::vector<std::uint8_t> rok, cok;
  build_axis(out_h, kh, pad_top, h, ridx, rok);
  build_axis(out_w, kw, pad_left, w, cidx, cok);

  bool rg = tape && (input.requires_grad() || filter.requires_grad());
  Tensor<T> out = Tensor<T>::zeros({n, cout, out_h, out_w}, rg);
  {
    auto pi = input.data();
    auto pf = filter.data();
    auto po = out.data_mut();
    for (std::int64_t bn = 0; bn < n; ++bn)
      for (std::int64_t co = 0; co < cout; ++co)
        for (std::int64_t i = 0; i < out_h; ++i)
          for (std::int64_t j = 0; j < out_w; ++j) {
            T acc = 0;
            for (std::int64_t ci = 0; ci < cin; ++ci) {
              const T* in_plane = pi.data() + (bn * cin + ci) * h * w;
              const T* f = pf.data() + (co * cin + ci) * kh * kw;
              for (std::int64_t kr = 0; kr < kh; ++kr) {
                if (!rok[i * kh + kr]) continue;
                const T* row = in_plane + static_cast<std::int64_t>(ridx[i * kh + kr]) * w;
                for (std::int64_t kc = 0; kc < kw; ++kc) {
                  if (!cok[j * kw + kc]) continue;
                  acc += row[cidx[j * kw + kc]] * f[kr * kw + kc];
                }
              }
            }
            po[((bn * cout + co) * out_h + i) * out_w + j] = acc;
          }
  }
  if (rg) {
    tape->push({"discrete_conv_op",
                {input, filter},
                out,
                [input = input, filter = filter, out = out, ridx, cidx, rok, cok, n, cin, cout, h, w,
                 kh, kw, out_h, out_w]() mutable {
                  auto up = out.grad();
                  auto pi = input.data();
                  auto pf = filter.data();
                  T* d_in = input.requires_grad() ? input.grad_mut().data() : nullptr;
                  T* d_f = filter.requires_grad() ? filter.grad_mut().data() : nullptr;
                  for (std::int64_t bn = 0; bn < n; ++bn)
                    for (std::int64_t co = 0; co < cout; ++co)
                      for (std::int64_t i = 0; i < out_h; ++i)
                        for (std::int64_t j = 0; j < out_w; ++j) {
                          const T u = up[((bn * cout + co) * out_h + i) * out_w + j];
                          if (u == T(0)) continue;
                          for (std::int64_t ci = 0; ci < cin; ++ci) {
                            const T* in_plane = pi.data() + (bn * cin + ci) * h * w;
                            const T* f = pf.data() + (co * cin + ci) * kh * kw;
                            T* gin = d_in ? d_in + (bn * cin + ci) * h * w : nullptr;
                            T* gf = d_f ? d_f + (co * cin + ci) * kh * kw : nullptr;
                            for (std::int64_t kr = 0; kr < kh; ++kr) {
                              if (!rok[i * kh + kr]) continue;
                              const std::int64_t r = ridx[i * kh + kr];
                              for (std::int64_t kc = 0; kc < kw; ++kc) {
                                if (!cok[j * kw + kc]) continue;
                                const std::int64_t cc = cidx[j * kw + kc];
                                if (gin) gin[r * w + cc] += u * f[kr * kw + kc];
                                if (gf) gf[kr * kw + kc] += u * in_plane[r * w + cc];
                              }
                            }
                          }
                        }
                }});
  }
  return out;
}

}  // namespace ccconv
