#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "ccconv/rng.hpp"
#include "ccconv/tensor.hpp"

namespace testsupport {

using ccconv::GradTape;
using ccconv::Rng;
using ccconv::Tensord;

// Central-difference gradient oracle (float64, configurable step).
// `forward` must rebuild the computation from the current contents of
// `inputs`, recording on the given tape when non-null. The scalar objective
// is sum(mask * forward(...)) with a fixed random mask. Returns the largest
// relative error over every element of every input.
inline double check_gradients(std::vector<Tensord> inputs,
                              const std::function<Tensord(GradTape<double>*)>& forward,
                              double step = 1e-5, std::uint64_t mask_seed = 7) {
  GradTape<double> tape;
  Tensord out = forward(&tape);
  Rng mask_rng(mask_seed);
  Tensord mask = Tensord::randn(out.shape(), mask_rng);
  tape.backward(out, mask);

  std::vector<std::vector<double>> analytic(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].has_grad()) {
      auto g = inputs[i].grad();
      analytic[i].assign(g.begin(), g.end());
    } else {
      analytic[i].assign(static_cast<std::size_t>(inputs[i].numel()), 0.0);
    }
  }

  auto objective = [&]() {
    Tensord o = forward(nullptr);
    auto po = o.data();
    auto pm = mask.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < po.size(); ++i) acc += po[i] * pm[i];
    return acc;
  };

  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto data = inputs[i].data_mut();
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double orig = data[j];
      data[j] = orig + step;
      const double hi = objective();
      data[j] = orig - step;
      const double lo = objective();
      data[j] = orig;
      const double numeric = (hi - lo) / (2.0 * step);
      const double a = analytic[i][j];
      const double rel = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), 1e-2});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

// Random tensor with values in [-1,1], nudged away from zero so LeakyReLU
// kinks do not sit inside the finite-difference stencil.
inline Tensord random_away_from_zero(ccconv::Shape shape, Rng& rng, bool requires_grad = false) {
  Tensord t = Tensord::uniform(std::move(shape), rng, -1.0, 1.0, requires_grad);
  for (auto& v : t.data_mut())
    if (std::abs(v) < 1e-3) v += v < 0 ? -0.1 : 0.1;
  return t;
}

}  // namespace testsupport
