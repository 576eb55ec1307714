#include "ccconv/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace ccconv {

AnalyticKernel parse_kernel(const std::string& name, double sigma_x, double sigma_y,
                            double rotation_deg) {
  if (name == "bicubic") return AnalyticKernel::bicubic();
  if (name == "gaussian") return AnalyticKernel::gaussian(sigma_x, sigma_y, rotation_deg);
  if (name == "box") return AnalyticKernel::box();
  if (name == "bilinear") return AnalyticKernel::bilinear();
  throw SpecError("unknown kernel: " + name);
}

namespace {

template <typename T>
double ssim_impl(const Tensor<T>& reference, const Tensor<T>& test) {
  if (reference.shape() != test.shape() || reference.ndim() != 2)
    throw ShapeError("ssim: expected matching [H,W] maps, got " + shape_str(reference.shape()) +
                     " and " + shape_str(test.shape()));
  const std::int64_t h = reference.dim(0), w = reference.dim(1);
  constexpr std::int64_t win = 11;
  constexpr double sigma = 1.5;
  if (h < win || w < win) throw ShapeError("ssim: maps smaller than the 11x11 window");

  double window[win * win];
  {
    double sum = 0.0;
    for (std::int64_t i = 0; i < win; ++i)
      for (std::int64_t j = 0; j < win; ++j) {
        const double dv = static_cast<double>(i - win / 2);
        const double dh = static_cast<double>(j - win / 2);
        window[i * win + j] = std::exp(-(dv * dv + dh * dh) / (2.0 * sigma * sigma));
        sum += window[i * win + j];
      }
    for (auto& v : window) v /= sum;
  }

  auto pr = reference.data();
  auto pt = test.data();
  double lo = pr[0], hi = pr[0];
  for (auto v : pr) {
    lo = std::min(lo, static_cast<double>(v));
    hi = std::max(hi, static_cast<double>(v));
  }
  const double range = std::max(hi - lo, 1e-12);
  const double c1 = (0.01 * range) * (0.01 * range);
  const double c2 = (0.03 * range) * (0.03 * range);

  double acc = 0.0;
  std::int64_t count = 0;
  for (std::int64_t i = 0; i + win <= h; ++i)
    for (std::int64_t j = 0; j + win <= w; ++j) {
      double ma = 0, mb = 0;
      for (std::int64_t u = 0; u < win; ++u)
        for (std::int64_t v = 0; v < win; ++v) {
          const double wgt = window[u * win + v];
          ma += wgt * static_cast<double>(pr[(i + u) * w + (j + v)]);
          mb += wgt * static_cast<double>(pt[(i + u) * w + (j + v)]);
        }
      double va = 0, vb = 0, cov = 0;
      for (std::int64_t u = 0; u < win; ++u)
        for (std::int64_t v = 0; v < win; ++v) {
          const double wgt = window[u * win + v];
          const double da = static_cast<double>(pr[(i + u) * w + (j + v)]) - ma;
          const double db = static_cast<double>(pt[(i + u) * w + (j + v)]) - mb;
          va += wgt * da * da;
          vb += wgt * db * db;
          cov += wgt * da * db;
        }
      const double s = ((2 * ma * mb + c1) * (2 * cov + c2)) /
                       ((ma * ma + mb * mb + c1) * (va + vb + c2));
      acc += s;
      ++count;
    }
  return acc / static_cast<double>(count);
}

}  // namespace

double ssim(const Tensor<float>& reference, const Tensor<float>& test) {
  return ssim_impl(reference, test);
}

double ssim(const Tensor<double>& reference, const Tensor<double>& test) {
  return ssim_impl(reference, test);
}

}  // namespace ccconv
