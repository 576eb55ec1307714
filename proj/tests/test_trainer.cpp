#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ccconv/trainer.hpp"
#include "support.hpp"

using namespace ccconv;
using testsupport::check_gradients;
using testsupport::random_away_from_zero;

TEST_CASE("adam leaves params unchanged for zero grads without decay") {
  AdamState<double> state;
  state.weight_decay = 0.0;
  auto p = Tensord::from_data({3}, {1.0, -2.0, 0.5});
  auto g = Tensord::zeros({3});
  auto next = adam_step(state, {p}, {g});
  for (std::int64_t i = 0; i < 3; ++i) CHECK(next[0].data()[i] == p.data()[i]);
  CHECK(state.t == 1);
}

TEST_CASE("adam first step magnitude is ~lr * sign(grad)") {
  AdamState<double> state;
  state.lr = 0.1;
  auto p = Tensord::from_data({2}, {0.0, 0.0});
  auto g = Tensord::from_data({2}, {0.37, -5.0});
  auto next = adam_step(state, {p}, {g});
  // bias-corrected first step: lr * g / (|g| + eps)
  CHECK(next[0].data()[0] == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(next[0].data()[1] == doctest::Approx(0.1).epsilon(1e-6));
}

TEST_CASE("adam drives a scalar quadratic to its minimum") {
  AdamState<double> state;
  state.lr = 0.1;
  auto p = Tensord::from_data({1}, {0.0});

  // independent reference of the same update rule
  double rm = 0, rv = 0, rp = 0;
  for (int t = 1; t <= 500; ++t) {
    auto g = Tensord::from_data({1}, {2.0 * (p.data()[0] - 3.0)});
    p = adam_step(state, {p}, {g})[0];

    const double rg = 2.0 * (rp - 3.0);
    rm = 0.9 * rm + 0.1 * rg;
    rv = 0.999 * rv + 0.001 * rg * rg;
    const double mh = rm / (1.0 - std::pow(0.9, t));
    const double vh = rv / (1.0 - std::pow(0.999, t));
    rp -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    if (t <= 10) CHECK(p.data()[0] == doctest::Approx(rp).epsilon(1e-12));
  }
  CHECK(p.data()[0] == doctest::Approx(3.0).epsilon(1e-3));
}

TEST_CASE("adam rejects mismatched shapes") {
  AdamState<double> state;
  auto p = Tensord::zeros({3});
  auto g = Tensord::zeros({4});
  CHECK_THROWS_AS(adam_step(state, {p}, {g}), ShapeError);
}

TEST_CASE("weight decay shrinks parameters with zero grads") {
  AdamState<double> state;
  state.weight_decay = 0.1;
  state.lr = 0.01;
  auto p = Tensord::from_data({1}, {2.0});
  auto next = adam_step(state, {p}, {Tensord::zeros({1})});
  CHECK(next[0].data()[0] < 2.0);
}

TEST_CASE("masked_mse value and gradient seed") {
  auto pred = Tensord::from_data({1, 1, 4, 4}, std::vector<double>(16, 2.0));
  auto target = Tensord::zeros({1, 1, 4, 4});
  auto loss = masked_mse(pred, target, 1);
  CHECK(loss.value == doctest::Approx(4.0));  // interior 2x2, all diffs 2
  // seed zero on the border, 2*d/count inside
  CHECK(loss.seed.at({0, 0, 0, 0}) == 0.0);
  CHECK(loss.seed.at({0, 0, 1, 1}) == doctest::Approx(2.0 * 2.0 / 4.0));
}

namespace {

template <typename T>
std::vector<T> flatten_params(const CCLayer<T>& layer) {
  std::vector<T> all;
  for (const auto& p : layer.parameters()) {
    auto d = p.data();
    all.insert(all.end(), d.begin(), d.end());
  }
  return all;
}

ImitationTask<float> small_task(std::uint64_t seed, int iterations) {
  Rng rng(seed);
  ImitationTask<float> task;
  task.image = synthetic_texture<float>(32, 32, rng);
  task.oracle = AnalyticKernel::bicubic();
  task.iterations = iterations;
  task.seed = seed;
  task.lr = 2e-3;
  return task;
}

}  // namespace

TEST_CASE("zero-iteration training keeps parameters") {
  auto task = small_task(40, 0);
  CCLayerConfig cfg;
  cfg.support_h = cfg.support_w = 4;
  Rng rng(41);
  auto layer = CCLayer<float>::make(cfg, rng);
  auto before = flatten_params(layer);
  auto result = train_imitation(task, layer);
  CHECK(result.losses.empty());
  CHECK(flatten_params(layer) == before);
}

TEST_CASE("training is bitwise deterministic given the seed") {
  auto run = [] {
    auto task = small_task(42, 40);
    CCLayerConfig cfg;
    cfg.support_h = cfg.support_w = 4;
    Rng rng(43);
    auto layer = CCLayer<float>::make(cfg, rng);
    return train_imitation(task, layer).losses;
  };
  auto a = run();
  auto b = run();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("bicubic imitation loss decreases") {
  auto task = small_task(44, 300);
  CCLayerConfig cfg;
  cfg.support_h = cfg.support_w = 4;
  Rng rng(45);
  auto layer = CCLayer<float>::make(cfg, rng);
  auto result = train_imitation(task, layer);
  const std::size_t tenth = result.losses.size() / 10;
  double min_head = 1e300, min_tail = 1e300;
  for (std::size_t i = 0; i < tenth; ++i) min_head = std::min(min_head, result.losses[i]);
  for (std::size_t i = result.losses.size() - tenth; i < result.losses.size(); ++i)
    min_tail = std::min(min_tail, result.losses[i]);
  CHECK(min_tail < min_head);
  CHECK(result.train_mse < 0.01);
}

TEST_CASE("evaluating on the training scale reproduces the training computation") {
  Rng trng(46);
  ImitationTask<float> task;
  task.image = synthetic_texture<float>(24, 24, trng);
  task.law = ScaleLaw::Fixed;
  task.fixed_h = AxisScale::from_float(0.5);
  task.fixed_w = AxisScale::from_float(0.5);
  task.iterations = 30;
  task.seed = 46;
  CCLayerConfig cfg;
  cfg.support_h = cfg.support_w = 4;
  Rng rng(47);
  auto layer = CCLayer<float>::make(cfg, rng);
  train_imitation(task, layer);

  ScaleSpec spec = ScaleSpec::with_default_out(task.fixed_h, task.fixed_w, 24, 24);
  auto target = resize(task.image, task.oracle, spec);
  auto pred = layer.forward(task.image, spec);
  const double direct = masked_mse(pred, target, task.border).value;

  auto report = evaluate_generalization(layer, task.image, task.oracle, 1, 0.5, 0.5, 99,
                                        direct, task.border);
  REQUIRE(report.per_scale.size() == 1);
  CHECK(report.per_scale[0].mse == doctest::Approx(direct).epsilon(1e-12));
  CHECK(report.ratio == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("single-layer ensemble equals a plain forward of the forced chain") {
  CCLayerConfig cfg;
  cfg.support_h = cfg.support_w = 2;
  Rng rng(48);
  CCChain<float> chain;
  chain.layers.push_back(CCLayer<float>::make(cfg, rng));

  auto input = synthetic_texture<float>(16, 16, rng);
  auto out1 = ensemble_forward(chain, input, Rational(1, 2), 1, 7);
  // single-layer chains are always the forced target scale
  auto specs = std::vector<ChainLayer>{{Rational(1, 2), Rational(1, 2), 8, 8}};
  auto direct = chain.forward(input, specs);
  CHECK(max_abs_diff(out1, direct) == 0.0);

  // identical members: aggregate equals the single run
  auto out3 = ensemble_forward(chain, input, Rational(1, 2), 3, 7);
  CHECK(max_abs_diff(out3, direct) < 1e-6);

  auto med = ensemble_forward(chain, input, Rational(1, 2), 3, 7, Aggregator::Median);
  CHECK(max_abs_diff(med, direct) < 1e-6);
}

TEST_CASE("ensemble of a trained two-layer chain does not hurt") {
  Rng rng(49);
  CCLayerConfig cfg;
  cfg.support_h = cfg.support_w = 3;
  CCChain<float> chain;
  chain.layers.push_back(CCLayer<float>::make(cfg, rng));
  chain.layers.push_back(CCLayer<float>::make(cfg, rng));
  chain.activation_between = false;

  auto input = synthetic_texture<float>(24, 24, rng);
  ScaleSpec half = ScaleSpec::exact(AxisScale::from_rational(Rational(1, 2)),
                                    AxisScale::from_rational(Rational(1, 2)), 12, 12);
  auto target = resize(input, AnalyticKernel::bicubic(), half);

  // brief training over random chains
  AdamState<float> adam;
  adam.lr = 3e-3;
  Rng crng(50);
  for (int iter = 0; iter < 120; ++iter) {
    auto specs = sample_scale_chain(2, Rational(1, 2), std::sqrt(0.5), 0.01, 10, {24, 24}, crng);
    GradTape<float> tape;
    auto pred = chain.forward(input, specs, &tape);
    auto loss = masked_mse(pred, target, 2);
    tape.backward(pred, loss.seed);
    for (auto& layer : chain.layers) {
      auto params = layer.parameters();
      layer.set_parameters(adam_step(adam, params, collect_grads(params)));
    }
  }

  // single members vs mean-of-3 ensemble
  double single_acc = 0.0;
  for (int m = 0; m < 3; ++m) {
    auto one = ensemble_forward(chain, input, Rational(1, 2), 1, 900 + m);
    single_acc += mse(one, target, 2);
  }
  auto ens = ensemble_forward(chain, input, Rational(1, 2), 3, 901);
  CHECK(mse(ens, target, 2) <= single_acc / 3.0 + 1e-9);
}

TEST_CASE("differentiable conv matches the pure oracle") {
  Rng rng(51);
  for (int trial = 0; trial < 8; ++trial) {
    const std::int64_t cin = 1 + trial % 2, cout = 1 + (trial / 2) % 2;
    const std::int64_t k = 2 + trial % 3;
    const std::int64_t stride = 1 + trial % 2;
    auto input = Tensord::randn({1, cin, 9, 9}, rng);
    auto filter = Tensord::randn({cout, cin, k, k}, rng);
    const PadMode pad = trial % 2 ? PadMode::Same : PadMode::Valid;
    auto got = discrete_conv_op(input, filter, stride, pad, BoundaryPolicy::Zero);
    DiscreteConvSpec<double> spec{filter, stride, pad, BoundaryPolicy::Zero};
    auto want = discrete_conv(input, spec);
    REQUIRE(got.shape() == want.shape());
    CHECK(max_abs_diff(got, want) < 1e-12);
  }
}

TEST_CASE("differentiable conv gradients") {
  Rng rng(52);
  auto input = random_away_from_zero({1, 2, 6, 6}, rng, true);
  auto filter = random_away_from_zero({2, 2, 3, 3}, rng, true);
  double err = check_gradients({input, filter}, [&](GradTape<double>* t) {
    return discrete_conv_op(input, filter, 2, PadMode::Same, BoundaryPolicy::Zero, t);
  });
  CHECK(err < 1e-4);
}

TEST_CASE("conv layer trains toward a simple target") {
  Rng rng(53);
  auto layer = ConvLayer<float>::make(1, 1, 3, 1, rng);
  auto input = synthetic_texture<float>(16, 16, rng);
  // target: 3x3 box blur of the input
  DiscreteConvSpec<float> blur{Tensorf::full({1, 1, 3, 3}, 1.0f / 9.0f), 1, PadMode::Same,
                               BoundaryPolicy::Zero};
  auto target = discrete_conv(input, blur);
  AdamState<float> adam;
  adam.lr = 1e-2;
  double first = 0, last = 0;
  for (int iter = 0; iter < 150; ++iter) {
    GradTape<float> tape;
    auto pred = layer.forward(input, &tape);
    auto loss = masked_mse(pred, target, 1);
    if (iter == 0) first = loss.value;
    last = loss.value;
    tape.backward(pred, loss.seed);
    auto params = layer.parameters();
    layer.set_parameters(adam_step(adam, params, collect_grads(params)));
  }
  CHECK(last < first / 10.0);
}

TEST_CASE("synthetic textures are deterministic and in range") {
  Rng a(54), b(54);
  auto ta = synthetic_texture<float>(20, 20, a);
  auto tb = synthetic_texture<float>(20, 20, b);
  CHECK(max_abs_diff(ta, tb) == 0.0);
  for (auto v : ta.data()) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("non-finite loss aborts training") {
  auto task = small_task(55, 50);
  task.lr = 1e10;  // guaranteed blow-up
  CCLayerConfig cfg;
  cfg.support_h = cfg.support_w = 4;
  Rng rng(56);
  auto layer = CCLayer<float>::make(cfg, rng);
  CHECK_THROWS_AS(train_imitation(task, layer), NumericError);
}
