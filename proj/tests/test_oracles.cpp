#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ccconv/oracles.hpp"
#include "ccconv/trainer.hpp"

using namespace ccconv;

TEST_CASE("bicubic partition of unity") {
  AnalyticKernel k = AnalyticKernel::bicubic();
  Rng rng(31);
  for (int trial = 0; trial < 1000; ++trial) {
    const double x = rng.uniform(-0.5, 0.5);
    double sum = 0.0;
    for (int j = -3; j <= 3; ++j) sum += k.eval1d(x - j);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
  // interpolating: 1 at zero, 0 at nonzero integers
  CHECK(k.eval1d(0.0) == 1.0);
  CHECK(k.eval1d(1.0) == doctest::Approx(0.0));
  CHECK(k.eval1d(-2.0) == doctest::Approx(0.0));
}

TEST_CASE("bicubic resize at scale 1 is the identity") {
  Rng rng(32);
  auto img = Tensorf::randn({1, 2, 7, 7}, rng);
  ScaleSpec spec = ScaleSpec::uniform_float(1.0, 7, 7);
  auto out = resize(img, AnalyticKernel::bicubic(), spec);
  REQUIRE(out.shape() == img.shape());
  for (std::int64_t i = 0; i < img.numel(); ++i)
    CHECK(out.data()[i] == doctest::Approx(img.data()[i]).epsilon(1e-5));
}

TEST_CASE("gaussian resize of an impulse is symmetric") {
  auto img = Tensorf::zeros({1, 1, 11, 11});
  img.data_mut()[5 * 11 + 5] = 1.0f;
  ScaleSpec spec = ScaleSpec::uniform_float(1.0, 11, 11);
  auto out = resize(img, AnalyticKernel::gaussian(1.0, 1.0, 0.0), spec);
  for (std::int64_t i = 0; i < 11; ++i)
    for (std::int64_t j = 0; j < 11; ++j) {
      CHECK(out.at({0, 0, i, j}) == doctest::Approx(out.at({0, 0, 10 - i, j})).epsilon(1e-5));
      CHECK(out.at({0, 0, i, j}) == doctest::Approx(out.at({0, 0, j, i})).epsilon(1e-5));
    }
}

TEST_CASE("1d ramp downscale matches a direct summation") {
  // image 1x8 ramp, s=1/2 horizontally only
  auto img = Tensord::from_data({1, 1, 1, 8}, {0, 1, 2, 3, 4, 5, 6, 7});
  ScaleSpec spec = ScaleSpec::exact(AxisScale::from_rational(Rational(1, 1)),
                                    AxisScale::from_rational(Rational(1, 2)), 1, 4);
  auto out = resize(img, AnalyticKernel::bicubic(), spec);
  AnalyticKernel k = AnalyticKernel::bicubic();
  for (std::int64_t n = 0; n < 4; ++n) {
    const double g = 2.0 * n + 0.5;
    double want = 0.0;
    for (std::int64_t m = -3; m < 11; ++m) {
      const std::int64_t mc = std::clamp<std::int64_t>(m, 0, 7);
      want += img.data()[mc] * k.eval1d(g - static_cast<double>(m));
    }
    CHECK(out.data()[n] == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("separable resize equals two 1d passes") {
  Rng rng(33);
  auto img = Tensord::randn({1, 1, 9, 9}, rng);
  AxisScale sh = AxisScale::from_float(0.8), sw = AxisScale::from_float(1.3);
  ScaleSpec both = ScaleSpec::with_default_out(sh, sw, 9, 9);
  auto direct = resize(img, AnalyticKernel::bicubic(), both);

  ScaleSpec rows = ScaleSpec::exact(sh, AxisScale::from_float(1.0), both.out_h, 9);
  auto half = resize(img, AnalyticKernel::bicubic(), rows);
  ScaleSpec cols = ScaleSpec::exact(AxisScale::from_float(1.0), sw, both.out_h, both.out_w);
  auto composed = resize(half, AnalyticKernel::bicubic(), cols);
  CHECK(max_abs_diff(direct, composed) < 1e-6 * 10);
}

TEST_CASE("discrete conv basics and loop oracle") {
  Rng rng(34);
  // 1x1 filter of value 1 is identity
  auto img = Tensord::randn({1, 1, 4, 4}, rng);
  DiscreteConvSpec<double> ident{Tensord::full({1, 1, 1, 1}, 1.0), 1, PadMode::Valid,
                                 BoundaryPolicy::Zero};
  auto out = discrete_conv(img, ident);
  CHECK(max_abs_diff(out, img) == 0.0);

  // 3x3 averaging on constant image stays constant in the interior
  auto flat = Tensord::full({1, 1, 6, 6}, 2.0);
  DiscreteConvSpec<double> avg{Tensord::full({1, 1, 3, 3}, 1.0 / 9.0), 1, PadMode::Valid,
                               BoundaryPolicy::Zero};
  auto smooth = discrete_conv(flat, avg);
  CHECK(smooth.shape() == Shape{1, 1, 4, 4});
  for (std::int64_t i = 0; i < smooth.numel(); ++i)
    CHECK(smooth.data()[i] == doctest::Approx(2.0));

  // random 5x5, 3x3 filter, stride 2 vs quadruple loop
  auto x = Tensord::randn({1, 1, 5, 5}, rng);
  auto f = Tensord::randn({1, 1, 3, 3}, rng);
  DiscreteConvSpec<double> spec{f, 2, PadMode::Valid, BoundaryPolicy::Zero};
  auto got = discrete_conv(x, spec);
  CHECK(got.shape() == Shape{1, 1, 2, 2});
  for (std::int64_t i = 0; i < 2; ++i)
    for (std::int64_t j = 0; j < 2; ++j) {
      double want = 0.0;
      for (std::int64_t kr = 0; kr < 3; ++kr)
        for (std::int64_t kc = 0; kc < 3; ++kc)
          want += x.at({0, 0, 2 * i + kr, 2 * j + kc}) * f.at({0, 0, kr, kc});
      CHECK(got.at({0, 0, i, j}) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("filter larger than input is rejected") {
  auto x = Tensord::zeros({1, 1, 2, 2});
  DiscreteConvSpec<double> spec{Tensord::zeros({1, 1, 3, 3}), 1, PadMode::Valid,
                                BoundaryPolicy::Zero};
  CHECK_THROWS_AS(discrete_conv(x, spec), ShapeError);
}

TEST_CASE("centroid basics") {
  auto img = Tensord::zeros({8, 8});
  img.data_mut()[3 * 8 + 4] = 2.0;
  auto [cy, cx] = centroid(img);
  CHECK(cy == doctest::Approx(3.0));
  CHECK(cx == doctest::Approx(4.0));

  auto two = Tensord::zeros({3, 3});
  two.data_mut()[0] = 1.0;      // (0,0)
  two.data_mut()[2 * 3] = 1.0;  // (2,0)
  auto [cy2, cx2] = centroid(two);
  CHECK(cy2 == doctest::Approx(1.0));
  CHECK(cx2 == doctest::Approx(0.0));

  CHECK_THROWS_AS(centroid(Tensord::zeros({4, 4})), NumericError);
}

TEST_CASE("centroid of a centered gaussian bump") {
  auto img = Tensord::zeros({33, 33});
  for (std::int64_t i = 0; i < 33; ++i)
    for (std::int64_t j = 0; j < 33; ++j) {
      const double dv = static_cast<double>(i) - 16.0, dh = static_cast<double>(j) - 16.0;
      img.data_mut()[i * 33 + j] = std::exp(-(dv * dv + dh * dh) / 8.0);
    }
  auto [cy, cx] = centroid(img);
  CHECK(cy == doctest::Approx(16.0).epsilon(1e-9));
  CHECK(cx == doctest::Approx(16.0).epsilon(1e-9));
}

TEST_CASE("even symmetric filter drifts the centroid by exactly 0.5 per pass") {
  auto img = Tensorf::zeros({1, 1, 64, 64});
  img.data_mut()[32 * 64 + 32] = 1.0f;
  DiscreteConvSpec<float> spec{sampled_gaussian_filter<float>(4, 0.5), 1, PadMode::Same,
                               BoundaryPolicy::Zero};
  auto x = img;
  for (int i = 0; i < 6; ++i) x = discrete_conv(x, spec);
  auto flat = Tensorf::from_data({64, 64},
                                 std::vector<float>(x.data().begin(), x.data().end()));
  auto [cy, cx] = centroid(flat);
  CHECK(cy == doctest::Approx(32.0 - 3.0).epsilon(1e-4));
  CHECK(cx == doctest::Approx(32.0 - 3.0).epsilon(1e-4));

  // odd symmetric filter keeps the centroid fixed
  DiscreteConvSpec<float> odd{sampled_gaussian_filter<float>(3, 0.5), 1, PadMode::Same,
                              BoundaryPolicy::Zero};
  auto y = img;
  for (int i = 0; i < 6; ++i) y = discrete_conv(y, odd);
  auto flat_y = Tensorf::from_data({64, 64},
                                   std::vector<float>(y.data().begin(), y.data().end()));
  auto [oy, ox] = centroid(flat_y);
  CHECK(oy == doctest::Approx(32.0).epsilon(1e-5));
  CHECK(ox == doctest::Approx(32.0).epsilon(1e-5));
}

TEST_CASE("shift_and_compare identical maps give 1") {
  Rng rng(35);
  auto a = Tensord::randn({1, 12, 12}, rng);
  CHECK(shift_and_compare(a, a, {0.0, 0.0}, 0.25) == doctest::Approx(1.0));
}

TEST_CASE("shift_and_compare undoes a translation of a smooth map") {
  // smooth map, translate by exactly 1 output pixel
  const std::int64_t n = 24;
  auto a = Tensord::zeros({1, n, n});
  auto b = Tensord::zeros({1, n, n});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      auto f = [&](double y, double x) {
        return std::sin(0.4 * y) + std::cos(0.3 * x) + 0.2 * std::sin(0.2 * (x + y));
      };
      a.data_mut()[i * n + j] = f(double(i), double(j));
      // content of b shifted down by 1: b[u] = a[u - 1]
      b.data_mut()[i * n + j] = f(double(i) - 1.0, double(j));
    }
  // net_scale 1/4, input shift (4,0) -> shift-back samples b at u + 1
  const double sim = shift_and_compare(a, b, {4.0, 0.0}, 0.25);
  CHECK(sim > 1.0 - 1e-3);
}

TEST_CASE("orthogonal random maps give near-zero similarity") {
  Rng rng(36);
  double acc = 0.0;
  const int trials = 32;
  for (int t = 0; t < trials; ++t) {
    auto a = Tensord::randn({1, 12, 12}, rng);
    auto b = Tensord::randn({1, 12, 12}, rng);
    acc += std::abs(shift_and_compare(a, b, {0.0, 0.0}, 1.0));
  }
  CHECK(acc / trials < 0.15);
}

TEST_CASE("ssim of identical and corrupted maps") {
  Rng rng(37);
  auto base = Tensorf::zeros({32, 32});
  for (std::int64_t i = 0; i < 32; ++i)
    for (std::int64_t j = 0; j < 32; ++j)
      base.data_mut()[i * 32 + j] =
          static_cast<float>(std::sin(0.3 * double(i)) * std::cos(0.2 * double(j)));
  CHECK(ssim(base, base) == doctest::Approx(1.0));
  auto noisy = Tensorf::zeros({32, 32});
  for (std::int64_t i = 0; i < noisy.numel(); ++i)
    noisy.data_mut()[i] = base.data()[i] + static_cast<float>(rng.normal(0.0, 0.5));
  CHECK(ssim(base, noisy) < 0.6);
}
