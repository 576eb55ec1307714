#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "ccconv/grid.hpp"
#include "ccconv/tensor.hpp"

namespace ccconv {

// Non-learned resampling kernels used as training targets and test oracles.
struct AnalyticKernel {
  enum class Kind { Bicubic, Gaussian, Box, Bilinear };
  Kind kind = Kind::Bicubic;
  double cubic_a = -0.5;
  double sigma_x = 1.0, sigma_y = 2.0, rotation_deg = 45.0;

  static AnalyticKernel bicubic() { return {Kind::Bicubic}; }
  static AnalyticKernel gaussian(double sx, double sy, double rot_deg) {
    AnalyticKernel k;
    k.kind = Kind::Gaussian;
    k.sigma_x = sx;
    k.sigma_y = sy;
    k.rotation_deg = rot_deg;
    return k;
  }
  static AnalyticKernel box() { return {Kind::Box}; }
  static AnalyticKernel bilinear() { return {Kind::Bilinear}; }

  bool separable() const { return kind != Kind::Gaussian; }
  bool normalize_per_pixel() const { return kind == Kind::Gaussian; }

  double radius() const {
    switch (kind) {
      case Kind::Bicubic: return 2.0;
      case Kind::Box: return 0.5;
      case Kind::Bilinear: return 1.0;
      case Kind::Gaussian: return 3.0 * std::max(sigma_x, sigma_y);
    }
    return 2.0;
  }

  double eval1d(double x) const {
    double a = std::abs(x);
    switch (kind) {
      case Kind::Bicubic: {
        const double c = cubic_a;
        if (a <= 1.0) return (c + 2.0) * a * a * a - (c + 3.0) * a * a + 1.0;
        if (a < 2.0) return c * a * a * a - 5.0 * c * a * a + 8.0 * c * a - 4.0 * c;
        return 0.0;
      }
      case Kind::Box: return a <= 0.5 ? 1.0 : 0.0;
      case Kind::Bilinear: return a < 1.0 ? 1.0 - a : 0.0;
      case Kind::Gaussian: return std::exp(-(x * x) / (2.0 * sigma_x * sigma_x));
    }
    return 0.0;
  }

  // dv = vertical offset (rows), dh = horizontal offset (cols).
  double eval(double dv, double dh) const {
    if (kind == Kind::Gaussian) {
      const double th = rotation_deg * 3.14159265358979323846 / 180.0;
      const double x = std::cos(th) * dh + std::sin(th) * dv;
      const double y = -std::sin(th) * dh + std::cos(th) * dv;
      return std::exp(-(x * x) / (2.0 * sigma_x * sigma_x) -
                      (y * y) / (2.0 * sigma_y * sigma_y));
    }
    return eval1d(dv) * eval1d(dh);
  }
};

AnalyticKernel parse_kernel(const std::string& name, double sigma_x, double sigma_y,
                            double rotation_deg);

// Output pixel n = sum_m image[m] * kernel(g_n - m) on the projected grid,
// replicate boundary. Gaussian weights are renormalized per output pixel.
template <typename T>
Tensor<T> resize(const Tensor<T>& image, const AnalyticKernel& kernel, const ScaleSpec& spec) {
  if (image.ndim() != 4)
    throw ShapeError("resize: image must be [N,C,H,W], got " + shape_str(image.shape()));
  spec.validate();
  const std::int64_t n = image.dim(0), c = image.dim(1);
  const std::int64_t in_h = image.dim(2), in_w = image.dim(3);
  ProjectedGrid grid = projected_grid(in_h, in_w, spec);
  const std::int64_t out_h = spec.out_h, out_w = spec.out_w;
  const double radius = kernel.radius();

  Tensor<T> out = Tensor<T>::zeros({n, c, out_h, out_w});
  auto pi = image.data();
  auto po = out.data_mut();
  for (std::int64_t i = 0; i < out_h; ++i) {
    const double gv = grid.v.coords[static_cast<std::size_t>(i)];
    const std::int64_t r_lo = static_cast<std::int64_t>(std::ceil(gv - radius));
    const std::int64_t r_hi = static_cast<std::int64_t>(std::floor(gv + radius));
    for (std::int64_t j = 0; j < out_w; ++j) {
      const double gh = grid.h.coords[static_cast<std::size_t>(j)];
      const std::int64_t c_lo = static_cast<std::int64_t>(std::ceil(gh - radius));
      const std::int64_t c_hi = static_cast<std::int64_t>(std::floor(gh + radius));
      for (std::int64_t bn = 0; bn < n; ++bn)
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const T* in_plane = pi.data() + (bn * c + ch) * in_h * in_w;
          double acc = 0.0, wsum = 0.0;
          for (std::int64_t r = r_lo; r <= r_hi; ++r) {
            const std::int64_t rr = std::clamp<std::int64_t>(r, 0, in_h - 1);
            const double wv = kernel.separable()
                                  ? kernel.eval1d(gv - static_cast<double>(r))
                                  : 0.0;
            for (std::int64_t cc = c_lo; cc <= c_hi; ++cc) {
              const std::int64_t rc = std::clamp<std::int64_t>(cc, 0, in_w - 1);
              const double w = kernel.separable()
                                   ? wv * kernel.eval1d(gh - static_cast<double>(cc))
                                   : kernel.eval(gv - static_cast<double>(r),
                                                 gh - static_cast<double>(cc));
              acc += w * static_cast<double>(in_plane[rr * in_w + rc]);
              wsum += w;
            }
          }
          if (kernel.normalize_per_pixel() && wsum != 0.0) acc /= wsum;
          po[((bn * c + ch) * out_h + i) * out_w + j] = static_cast<T>(acc);
        }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// plain strided cross-correlation (non-learned reference)

enum class PadMode { Valid, Same };

template <typename T>
struct DiscreteConvSpec {
  Tensor<T> filter;  // [Cout, Cin, kh, kw]
  std::int64_t stride = 1;
  PadMode pad = PadMode::Valid;
  BoundaryPolicy fill = BoundaryPolicy::Zero;
};

template <typename T>
Tensor<T> discrete_conv(const Tensor<T>& input, const DiscreteConvSpec<T>& spec) {
  if (input.ndim() != 4 || spec.filter.ndim() != 4)
    throw ShapeError("discrete_conv: expected input [N,C,H,W] and filter [Co,Ci,kh,kw], got " +
                     shape_str(input.shape()) + " and " + shape_str(spec.filter.shape()));
  const std::int64_t n = input.dim(0), cin = input.dim(1);
  const std::int64_t h = input.dim(2), w = input.dim(3);
  const std::int64_t cout = spec.filter.dim(0);
  const std::int64_t kh = spec.filter.dim(2), kw = spec.filter.dim(3);
  if (spec.filter.dim(1) != cin)
    throw ShapeError("discrete_conv: filter expects " + std::to_string(spec.filter.dim(1)) +
                     " input channels, got " + std::to_string(cin));
  const std::int64_t s = spec.stride;
  if (s < 1) throw SpecError("discrete_conv: stride must be >= 1");

  std::int64_t pad_top = 0, pad_left = 0, out_h, out_w;
  if (spec.pad == PadMode::Valid) {
    if (h < kh || w < kw)
      throw ShapeError("discrete_conv: filter " + std::to_string(kh) + "x" + std::to_string(kw) +
                       " larger than input " + std::to_string(h) + "x" + std::to_string(w));
    out_h = (h - kh) / s + 1;
    out_w = (w - kw) / s + 1;
  } else {
    out_h = (h + s - 1) / s;
    out_w = (w + s - 1) / s;
    pad_top = ((out_h - 1) * s + kh - h) / 2;
    pad_left = ((out_w - 1) * s + kw - w) / 2;
    if (pad_top < 0) pad_top = 0;
    if (pad_left < 0) pad_left = 0;
  }

  Tensor<T> out = Tensor<T>::zeros({n, cout, out_h, out_w});
  auto pi = input.data();
  auto pf = spec.filter.data();
  auto po = out.data_mut();
  for (std::int64_t bn = 0; bn < n; ++bn)
    for (std::int64_t co = 0; co < cout; ++co)
      for (std::int64_t i = 0; i < out_h; ++i)
        for (std::int64_t j = 0; j < out_w; ++j) {
          double acc = 0.0;
          for (std::int64_t ci = 0; ci < cin; ++ci) {
            const T* in_plane = pi.data() + (bn * cin + ci) * h * w;
            const T* f = pf.data() + (co * cin + ci) * kh * kw;
            for (std::int64_t kr = 0; kr < kh; ++kr) {
              const std::int64_t r = i * s - pad_top + kr;
              for (std::int64_t kc = 0; kc < kw; ++kc) {
                const std::int64_t cc = j * s - pad_left + kc;
                double v;
                if (r >= 0 && r < h && cc >= 0 && cc < w) {
                  v = static_cast<double>(in_plane[r * w + cc]);
                } else if (spec.fill == BoundaryPolicy::Zero) {
                  v = 0.0;
                } else {
                  bool ok = true;
                  const std::int64_t rr = resolve_index(r, h, spec.fill, ok);
                  const std::int64_t rc = resolve_index(cc, w, spec.fill, ok);
                  v = static_cast<double>(in_plane[rr * w + rc]);
                }
                acc += v * static_cast<double>(f[kr * kw + kc]);
              }
            }
          }
          po[((bn * cout + co) * out_h + i) * out_w + j] = static_cast<T>(acc);
        }
  return out;
}

// Gaussian filter sampled at k integer-spaced taps centered on the filter
// (offsets +/-(k-1)/2 ... in steps of 1), normalized to sum 1.
template <typename T>
Tensor<T> sampled_gaussian_filter(std::int64_t k, double sigma) {
  Tensor<T> f = Tensor<T>::zeros({1, 1, k, k});
  auto p = f.data_mut();
  const double c = static_cast<double>(k - 1) / 2.0;
  double sum = 0.0;
  for (std::int64_t r = 0; r < k; ++r)
    for (std::int64_t cc = 0; cc < k; ++cc) {
      const double dv = static_cast<double>(r) - c;
      const double dh = static_cast<double>(cc) - c;
      const double v = std::exp(-(dv * dv + dh * dh) / (2.0 * sigma * sigma));
      p[r * k + cc] = static_cast<T>(v);
      sum += v;
    }
  for (auto& v : p) v = static_cast<T>(static_cast<double>(v) / sum);
  return f;
}

// ---------------------------------------------------------------------------
// measurements

// Intensity-weighted mean coordinate (row, col) of a [H,W] map.
template <typename T>
std::pair<double, double> centroid(const Tensor<T>& image) {
  if (image.ndim() != 2)
    throw ShapeError("centroid: image must be [H,W], got " + shape_str(image.shape()));
  const std::int64_t h = image.dim(0), w = image.dim(1);
  auto p = image.data();
  double mass = 0.0, my = 0.0, mx = 0.0;
  for (std::int64_t i = 0; i < h; ++i)
    for (std::int64_t j = 0; j < w; ++j) {
      const double v = static_cast<double>(p[i * w + j]);
      mass += v;
      my += v * static_cast<double>(i);
      mx += v * static_cast<double>(j);
    }
  if (!(mass > 0.0)) throw NumericError("centroid: image has no positive mass");
  return {my / mass, mx / mass};
}

template <typename T>
double cosine_similarity(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("cosine_similarity: shapes differ, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  auto pa = a.data();
  auto pb = b.data();
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    dot += static_cast<double>(pa[i]) * static_cast<double>(pb[i]);
    na += static_cast<double>(pa[i]) * static_cast<double>(pa[i]);
    nb += static_cast<double>(pb[i]) * static_cast<double>(pb[i]);
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

template <typename T>
double mse(const Tensor<T>& a, const Tensor<T>& b, std::int64_t border = 0) {
  if (a.shape() != b.shape())
    throw ShapeError("mse: shapes differ, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  const std::size_t rank = a.ndim();
  const std::int64_t h = a.dim(rank - 2), w = a.dim(rank - 1);
  const std::int64_t outer = a.numel() / (h * w);
  std::int64_t bh = std::min(border, (h - 1) / 2), bw = std::min(border, (w - 1) / 2);
  auto pa = a.data();
  auto pb = b.data();
  double acc = 0.0;
  std::int64_t count = 0;
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t i = bh; i < h - bh; ++i)
      for (std::int64_t j = bw; j < w - bw; ++j) {
        const double d = static_cast<double>(pa[(o * h + i) * w + j]) -
                         static_cast<double>(pb[(o * h + i) * w + j]);
        acc += d * d;
        ++count;
      }
  return count ? acc / static_cast<double>(count) : 0.0;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("max_abs_diff: shapes differ, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  auto pa = a.data();
  auto pb = b.data();
  double m = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(pa[i]) - static_cast<double>(pb[i])));
  return m;
}

// Mean structural similarity between two [H,W] maps, 11x11 Gaussian window
// (sigma 1.5), dynamic range taken from the reference map.
double ssim(const Tensor<float>& reference, const Tensor<float>& test);
double ssim(const Tensor<double>& reference, const Tensor<double>& test);

// Shifts `b` back by shift*net_scale per axis (bicubic interpolation,
// replicate edges), crops 2 border pixels from both maps, and returns the
// cosine similarity of the crops. Maps are [C,H,W] or [H,W].
template <typename T>
double shift_and_compare(const Tensor<T>& a, const Tensor<T>& b,
                         std::pair<double, double> shift, double net_scale) {
  if (a.shape() != b.shape())
    throw ShapeError("shift_and_compare: shapes differ, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  const std::size_t rank = a.ndim();
  const std::int64_t h = a.dim(rank - 2), w = a.dim(rank - 1);
  const std::int64_t ch = rank >= 3 ? a.numel() / (h * w) : 1;
  const double dy = shift.first * net_scale;
  const double dx = shift.second * net_scale;

  constexpr std::int64_t crop = 2;
  if (h <= 2 * crop || w <= 2 * crop)
    throw ShapeError("shift_and_compare: maps too small to crop, " + shape_str(a.shape()));

  AnalyticKernel cubic = AnalyticKernel::bicubic();
  const std::int64_t ih = h - 2 * crop, iw = w - 2 * crop;
  Tensor<T> ca = Tensor<T>::zeros({ch, ih, iw});
  Tensor<T> cb = Tensor<T>::zeros({ch, ih, iw});
  auto pa = a.data();
  auto pb = b.data();
  auto pca = ca.data_mut();
  auto pcb = cb.data_mut();
  for (std::int64_t c = 0; c < ch; ++c) {
    const T* map_a = pa.data() + c * h * w;
    const T* map_b = pb.data() + c * h * w;
    for (std::int64_t i = 0; i < ih; ++i)
      for (std::int64_t j = 0; j < iw; ++j) {
        pca[(c * ih + i) * iw + j] = map_a[(i + crop) * w + (j + crop)];
        // sample b at (i+crop+dy, j+crop+dx)
        const double sv = static_cast<double>(i + crop) + dy;
        const double sh = static_cast<double>(j + crop) + dx;
        const std::int64_t r_lo = static_cast<std::int64_t>(std::ceil(sv - 2.0));
        const std::int64_t c_lo = static_cast<std::int64_t>(std::ceil(sh - 2.0));
        double acc = 0.0;
        for (std::int64_t r = r_lo; r <= r_lo + 3; ++r) {
          const double wv = cubic.eval1d(sv - static_cast<double>(r));
          const std::int64_t rr = std::clamp<std::int64_t>(r, 0, h - 1);
          for (std::int64_t cc = c_lo; cc <= c_lo + 3; ++cc) {
            const double wh = cubic.eval1d(sh - static_cast<double>(cc));
            const std::int64_t rc = std::clamp<std::int64_t>(cc, 0, w - 1);
            acc += wv * wh * static_cast<double>(map_b[rr * w + rc]);
          }
        }
        pcb[(c * ih + i) * iw + j] = static_cast<T>(acc);
      }
  }
  return cosine_similarity(ca, cb);
}

}  // namespace ccconv
