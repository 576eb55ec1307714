#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "ccconv/internal_net.hpp"
#include "support.hpp"

using namespace ccconv;
using testsupport::check_gradients;
using testsupport::random_away_from_zero;

TEST_CASE("init is deterministic given the seed") {
  Rng a(42), b(42);
  auto na = init_internal_net<float>(InputMode::Distances, 2, 3, 9, a);
  auto nb = init_internal_net<float>(InputMode::Distances, 2, 3, 9, b);
  REQUIRE(na.stages.size() == nb.stages.size());
  for (std::size_t i = 0; i < na.stages.size(); ++i) {
    for (std::int64_t j = 0; j < na.stages[i].weight.numel(); ++j)
      CHECK(na.stages[i].weight.data()[j] == nb.stages[i].weight.data()[j]);
    for (std::int64_t j = 0; j < na.stages[i].bias.numel(); ++j)
      CHECK(na.stages[i].bias.data()[j] == nb.stages[i].bias.data()[j]);
  }
}

TEST_CASE("stage widths and channel bookkeeping") {
  Rng rng(1);
  auto net = init_internal_net<float>(InputMode::Distances, 2, 3, 4, rng);
  REQUIRE(net.stages.size() == 3);
  CHECK(net.stages[0].weight.shape() == Shape{16, 2});
  CHECK(net.stages[1].weight.shape() == Shape{16, 16});
  CHECK(net.stages[2].weight.shape() == Shape{6, 16});  // c_in*c_out

  auto direct = init_internal_net<float>(InputMode::GridDirect, 2, 3, 4, rng);
  CHECK(direct.stages[2].weight.shape() == Shape{24, 16});  // c_in*c_out*K
}

TEST_CASE("last-stage bias statistics match the target variance") {
  // c_in=1, K=9: sd = sqrt(2/9) ~ 0.4714. Use a large final stage so one
  // init yields 1e5 samples.
  const double want_sd = std::sqrt(InitSpec::target_bias_variance(1, 9));
  CHECK(want_sd == doctest::Approx(0.4714).epsilon(1e-3));

  Rng rng(7);
  auto net = init_internal_net<double>(InputMode::Distances, 316, 317, 9, rng);
  auto biases = net.stages.back().bias.data();
  REQUIRE(biases.size() >= 100000);
  const double sd9 = std::sqrt(InitSpec::target_bias_variance(316, 9));
  double acc = 0.0;
  for (auto b : biases) acc += b * b;
  const double var = acc / static_cast<double>(biases.size());
  CHECK(var > 0.8 * sd9 * sd9);
  CHECK(var < 1.2 * sd9 * sd9);
}

TEST_CASE("zero hidden weights pass the last bias through") {
  Rng rng(2);
  auto net = init_internal_net<double>(InputMode::Distances, 1, 1, 4, rng);
  for (auto& s : net.stages) {
    for (auto& v : s.weight.data_mut()) v = 0;
    for (auto& v : s.bias.data_mut()) v = 0;
  }
  net.stages.back().bias.data_mut()[0] = 0.75;
  auto offsets = Tensord::randn({4, 2, 3, 3}, rng);
  auto w = internal_net_weights(net, offsets, 1, 1, 4);
  CHECK(w.shape() == Shape{1, 1, 1, 4, 3, 3});
  for (std::int64_t i = 0; i < w.numel(); ++i) CHECK(w.data()[i] == doctest::Approx(0.75));
}

TEST_CASE("weight tensor shape in distances mode") {
  Rng rng(3);
  auto net = init_internal_net<float>(InputMode::Distances, 2, 3, 4, rng);
  auto offsets = Tensorf::randn({4, 2, 5, 5}, rng);
  auto w = internal_net_weights(net, offsets, 2, 3, 4);
  CHECK(w.shape() == Shape{1, 3, 2, 4, 5, 5});
}

TEST_CASE("wrong offsets batch for the mode is rejected") {
  Rng rng(4);
  auto net = init_internal_net<float>(InputMode::Distances, 1, 1, 4, rng);
  auto offsets = Tensorf::randn({1, 2, 5, 5}, rng);  // batch must be K=4
  CHECK_THROWS_AS(internal_net_weights(net, offsets, 1, 1, 4), ShapeError);

  auto direct = init_internal_net<float>(InputMode::GridDirect, 1, 1, 4, rng);
  auto offs2 = Tensorf::randn({4, 2, 5, 5}, rng);  // batch must be 1
  CHECK_THROWS_AS(internal_net_weights(direct, offs2, 1, 1, 4), ShapeError);
}

namespace {

// per-point scalar MLP, evaluated with plain loops
double mlp_reference(const InternalNetParams<double>& net, double dv, double dh,
                     std::int64_t out_channel) {
  std::vector<double> x = {dv, dh};
  for (std::size_t s = 0; s < net.stages.size(); ++s) {
    const auto& st = net.stages[s];
    const std::int64_t co = st.weight.dim(0), ci = st.weight.dim(1);
    std::vector<double> y(static_cast<std::size_t>(co));
    for (std::int64_t o = 0; o < co; ++o) {
      double acc = st.bias.data()[o];
      for (std::int64_t i = 0; i < ci; ++i)
        acc += st.weight.data()[o * ci + i] * x[static_cast<std::size_t>(i)];
      if (s + 1 != net.stages.size()) acc = acc > 0 ? acc : net.slope * acc;
      y[static_cast<std::size_t>(o)] = acc;
    }
    x = std::move(y);
  }
  return x[static_cast<std::size_t>(out_channel)];
}

}  // namespace

TEST_CASE("forward equals the per-point reference") {
  Rng rng(5);
  auto net = init_internal_net<double>(InputMode::Distances, 2, 3, 4, rng);
  auto offsets = Tensord::randn({4, 2, 3, 3}, rng);
  auto w = internal_net_weights(net, offsets, 2, 3, 4);
  for (std::int64_t co = 0; co < 3; ++co)
    for (std::int64_t ci = 0; ci < 2; ++ci)
      for (std::int64_t k = 0; k < 4; ++k)
        for (std::int64_t i = 0; i < 3; ++i)
          for (std::int64_t j = 0; j < 3; ++j) {
            const double dv = offsets.at({k, 0, i, j});
            const double dh = offsets.at({k, 1, i, j});
            const double want = mlp_reference(net, dv, dh, co * 2 + ci);
            CHECK(w.at({0, co, ci, k, i, j}) == doctest::Approx(want).epsilon(1e-12));
          }
}

TEST_CASE("spatially permuting offsets permutes outputs identically") {
  Rng rng(6);
  auto net = init_internal_net<double>(InputMode::Distances, 1, 2, 2, rng);
  auto offsets = Tensord::randn({2, 2, 2, 3}, rng);
  auto w = internal_net_weights(net, offsets, 1, 2, 2);
  // reverse the spatial order
  auto rev = Tensord::zeros(offsets.shape());
  const std::int64_t plane = 6;
  for (std::int64_t b = 0; b < 2; ++b)
    for (std::int64_t c = 0; c < 2; ++c)
      for (std::int64_t p = 0; p < plane; ++p)
        rev.data_mut()[(b * 2 + c) * plane + p] =
            offsets.data()[(b * 2 + c) * plane + plane - 1 - p];
  auto wrev = internal_net_weights(net, rev, 1, 2, 2);
  for (std::int64_t c = 0; c < w.numel() / plane; ++c)
    for (std::int64_t p = 0; p < plane; ++p)
      CHECK(wrev.data()[c * plane + p] == w.data()[c * plane + plane - 1 - p]);
}

TEST_CASE("gradients of all stages match finite differences") {
  Rng rng(8);
  auto net = init_internal_net<double>(InputMode::Distances, 2, 2, 4, rng);
  auto offsets = random_away_from_zero({4, 2, 3, 3}, rng);
  std::vector<Tensord> params;
  for (auto& s : net.stages) {
    params.push_back(s.weight);
    params.push_back(s.bias);
  }
  double err = check_gradients(params, [&](GradTape<double>* t) {
    return internal_net_weights(net, offsets, 2, 2, 4, t);
  });
  CHECK(err < 1e-4);
}

TEST_CASE("grid-direct mode gradients") {
  Rng rng(9);
  auto net = init_internal_net<double>(InputMode::GridDirect, 1, 2, 4, rng);
  auto offsets = random_away_from_zero({1, 2, 3, 3}, rng);
  std::vector<Tensord> params;
  for (auto& s : net.stages) {
    params.push_back(s.weight);
    params.push_back(s.bias);
  }
  double err = check_gradients(params, [&](GradTape<double>* t) {
    return internal_net_weights(net, offsets, 1, 2, 4, t);
  });
  CHECK(err < 1e-4);
}

TEST_CASE("sample_kernel shapes and constant net") {
  Rng rng(10);
  auto net = init_internal_net<float>(InputMode::Distances, 1, 1, 16, rng);
  auto img = sample_kernel(net, 200, 200, 2.0, 2.0);
  CHECK(img.shape() == Shape{1, 200, 200});

  for (auto& s : net.stages) {
    for (auto& v : s.weight.data_mut()) v = 0;
    for (auto& v : s.bias.data_mut()) v = 0;
  }
  net.stages.back().bias.data_mut()[0] = 0.5f;
  auto flat = sample_kernel(net, 16, 16, 2.0, 2.0);
  for (std::int64_t i = 0; i < flat.numel(); ++i) CHECK(flat.data()[i] == 0.5f);

  CHECK_THROWS_AS(sample_kernel(net, 1, 16, 2.0, 2.0), SpecError);
}

TEST_CASE("checkpoint roundtrip") {
  Rng rng(11);
  auto net = init_internal_net<float>(InputMode::GridDirect, 2, 3, 9, rng);
  const std::string path =
      (std::filesystem::temp_directory_path() / "net_roundtrip.cckp").string();
  save_internal_net(path, net);
  auto back = load_internal_net<float>(path);
  CHECK(back.input_mode == InputMode::GridDirect);
  CHECK(back.slope == net.slope);
  REQUIRE(back.stages.size() == net.stages.size());
  for (std::size_t i = 0; i < net.stages.size(); ++i) {
    REQUIRE(back.stages[i].weight.shape() == net.stages[i].weight.shape());
    for (std::int64_t j = 0; j < net.stages[i].weight.numel(); ++j)
      CHECK(back.stages[i].weight.data()[j] == net.stages[i].weight.data()[j]);
  }
  std::remove(path.c_str());
  std::remove((path + ".json").c_str());
}
