// Copyright (c) 2026 The TGJAR Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "tgjar/nn/adam.hpp"
#include "tgjar/nn/checkpoint.hpp"
#include "tgjar/nn/grad_check.hpp"
#include "tgjar/nn/layers.hpp"

namespace tgjar::nn {
namespace {

using G = Graph<double>;
using V = Var<double>;
using Vs = std::vector<V>;

constexpr double kPrimitiveTol = 1e-4;

Tensor<double> randn(Shape s, std::uint64_t seed, double sd = 1.0) {
  Rng rng(seed);
  return normal_tensor<double>(std::move(s), sd, rng);
}

void expect_grad_ok(const GradCheckReport& r, double tol = kPrimitiveTol) {
  EXPECT_TRUE(r.passed(tol)) << "max rel err " << r.max_rel_error << " at " << r.worst << " (checked "
                             << r.checked << ")";
  EXPECT_LE(r.skipped_kinks, r.checked / 10 + 1);
}

TEST(GradCheck, LinearFunctionIsExact) {
  auto r = grad_check([](G&, const Vs& in) { return scale(in[0], 3.0); }, {randn({5}, 1)});
  EXPECT_LT(r.max_rel_error, 1e-9);
  EXPECT_EQ(r.checked, 5u);
}

TEST(GradCheck, FlagsWrongGradient) {
  // Forward is x^2 but the recorded gradient is 3x.
  auto bad = [](G&, const Vs& in) {
    Tensor<double> out = in[0].value();
    for (auto& v : out.storage()) v *= v;
    return in[0].graph().record(std::move(out), {in[0]},
                                [id = in[0].id()](const G& g, std::size_t, const Tensor<double>& go, auto grads) {
                                  for (std::size_t i = 0; i < go.size(); ++i)
                                    (*grads[0])[i] += 3 * g.value(id)[i] * go[i];
                                });
  };
  EXPECT_FALSE(grad_check(bad, {randn({4}, 2)}).passed(kPrimitiveTol));
}

TEST(GradCheck, NonFiniteOutputRaises) {
  Tensor<double> x({2}, -1.0);
  EXPECT_THROW(grad_check([](G&, const Vs& in) { return log(in[0]); }, {x}), NumericError);
}

TEST(Conv2d, PointwiseIdentity) {
  const std::size_t c = 4;
  Tensor<double> w({c, c, 1, 1});
  for (std::size_t i = 0; i < c; ++i) w[i * c + i] = 1;
  const Tensor<double> x = randn({2, c, 5, 6}, 3);
  EXPECT_EQ(conv2d_forward(x, w, Tensor<double>({c}), Conv2dSpec{1, 1, 0}), x);
}

TEST(Conv2d, BottleneckShape) {
  ParamStore<float> store;
  Rng rng(1);
  const LayerSpec s = LayerSpec::parse("Conv3-128-1-1", 128);
  declare_conv(store, "c", s, rng);
  Graph<float> g(false);
  auto y = conv(g, store, "c", g.constant(Tensor<float>({1, 128, 32, 32}, 0.1f)), s);
  EXPECT_EQ(y.shape(), (Shape{1, 128, 32, 32}));
}

TEST(Conv2d, ChannelMismatchThrows) {
  Tensor<double> x({1, 3, 8, 8}), w({4, 2, 3, 3}), b({4});
  EXPECT_THROW(conv2d_forward(x, w, b, Conv2dSpec{}), ShapeError);
}

TEST(Conv2d, GradientMatchesFiniteDifferences) {
  for (const Conv2dSpec spec : {Conv2dSpec{3, 1, 1}, Conv2dSpec{3, 2, 1}, Conv2dSpec{4, 2, 2}, Conv2dSpec{1, 1, 0}}) {
    auto r = grad_check([spec](G&, const Vs& in) { return conv2d(in[0], in[1], in[2], spec); },
                        {randn({2, 3, 7, 6}, 4), randn({4, 3, spec.kernel, spec.kernel}, 5), randn({4}, 6)});
    expect_grad_ok(r);
  }
}

TEST(LayerSpec, ParsesNamingConvention) {
  const LayerSpec s = LayerSpec::parse("Conv3-64-1-1", 3);
  EXPECT_EQ(s.kernel, 3u);
  EXPECT_EQ(s.channels_out, 64u);
  EXPECT_EQ(s.stride, 1u);
  EXPECT_EQ(s.padding, 1u);
  EXPECT_EQ(LayerSpec::parse("Conv3-128", 128).padding, 1u);
  EXPECT_THROW(LayerSpec::parse("Dense-3", 1), DomainError);
}

TEST(ResidualBlock, ZeroWeightsIsIdentity) {
  ParamStore<double> store;
  Rng rng(2);
  declare_residual_block(store, "rb", 6, rng);
  for (auto& [name, p] : store) p.value.fill(0);
  G g(false);
  const Tensor<double> x = randn({1, 6, 5, 5}, 7);
  auto y = residual_block(g, store, "rb", g.constant(x));
  EXPECT_EQ(y.value(), x);
}

TEST(ResidualBlock, ShapePreservingAndGradient) {
  ParamStore<double> store;
  Rng rng(3);
  declare_residual_block(store, "rb", 4, rng);
  G g0(false);
  EXPECT_EQ(residual_block(g0, store, "rb", g0.constant(randn({2, 4, 6, 6}, 1))).shape(), (Shape{2, 4, 6, 6}));
  auto r = grad_check([&](G& g, const Vs& in) { return residual_block(g, store, "rb", in[0]); },
                      {randn({2, 4, 6, 6}, 8)}, &store);
  expect_grad_ok(r);
}

TEST(BiLstm, SingleStep) {
  ParamStore<double> store;
  Rng rng(4);
  declare_bilstm(store, "lstm", 5, 3, rng);
  G g(false);
  auto out = bilstm_forward(g, store, "lstm", g.constant(randn({1, 5}, 9)));
  EXPECT_EQ(out.hidden_states.shape(), (Shape{1, 6}));
  // With one token both halves of the final state are the per-step state.
  EXPECT_EQ(out.final_state.value().storage(), out.hidden_states.value().storage());
}

TEST(BiLstm, ZeroWeightsGiveZeros) {
  ParamStore<double> store;
  Rng rng(5);
  declare_bilstm(store, "lstm", 4, 3, rng);
  for (auto& [name, p] : store) p.value.fill(0);
  G g(false);
  auto out = bilstm_forward(g, store, "lstm", g.constant(Tensor<double>({3, 4})));
  for (double v : out.hidden_states.value().values()) EXPECT_EQ(v, 0.0);
  for (double v : out.final_state.value().values()) EXPECT_EQ(v, 0.0);
}

TEST(BiLstm, EmptySequenceRejected) {
  EXPECT_THROW(Tensor<double>({0, 4}), ShapeError);
}

TEST(BiLstm, GradientThroughThreeSteps) {
  ParamStore<double> store;
  Rng rng(6);
  declare_bilstm(store, "lstm", 4, 3, rng);
  auto r = grad_check(
      [&](G& g, const Vs& in) {
        auto out = bilstm_forward(g, store, "lstm", in[0]);
        return concat<double>({reshape(out.hidden_states, {1, 18}), out.final_state}, 1);
      },
      {randn({3, 4}, 10)}, &store);
  expect_grad_ok(r);
}

TEST(Softmax, UniformInput) {
  G g(false);
  auto y = softmax(g.constant(Tensor<double>({1, 7}, 2.5)), 1);
  for (double v : y.value().values()) EXPECT_NEAR(v, 1.0 / 7, 1e-15);
}

TEST(Softmax, RowsAreDistributions) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    G g(false);
    auto y = softmax(g.constant(randn({6, 9}, seed, 5.0)), 1);
    for (std::size_t r = 0; r < 6; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 9; ++c) {
        EXPECT_GE(y.value()[r * 9 + c], 0.0);
        s += y.value()[r * 9 + c];
      }
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST(Gap, ConstantMap) {
  G g(false);
  auto y = gap(g.constant(Tensor<double>({2, 3, 4, 5}, 0.7)));
  EXPECT_EQ(y.shape(), (Shape{2, 3}));
  for (double v : y.value().values()) EXPECT_NEAR(v, 0.7, 1e-15);
}

TEST(Primitives, FiniteDifferenceOracle) {
  struct Case {
    const char* name;
    GradCheckFn fn;
    std::vector<Tensor<double>> inputs;
  };
  Tensor<double> positive = randn({3, 4}, 20);
  for (auto& v : positive.storage()) v = 0.5 + std::abs(v);
  const std::vector<Case> cases = {
      {"softmax", [](G&, const Vs& in) { return softmax(in[0], 1); }, {randn({3, 5}, 21)}},
      {"softmax_axis0", [](G&, const Vs& in) { return softmax(in[0], 0); }, {randn({4, 3}, 22)}},
      {"log_softmax", [](G&, const Vs& in) { return log_softmax(in[0], 1); }, {randn({3, 5}, 23)}},
      {"gap", [](G&, const Vs& in) { return gap(in[0]); }, {randn({2, 3, 4, 4}, 24)}},
      {"prelu", [](G&, const Vs& in) { return prelu(in[0], in[1]); }, {randn({2, 3, 4, 4}, 25), randn({3}, 26)}},
      {"fc", [](G&, const Vs& in) { return linear(in[0], in[1], in[2]); },
       {randn({3, 5}, 27), randn({4, 5}, 28), randn({4}, 29)}},
      {"upsample", [](G&, const Vs& in) { return upsample_nearest2x(in[0]); }, {randn({1, 2, 3, 4}, 30)}},
      {"repeat", [](G&, const Vs& in) { return repeat_spatial(in[0], 3, 2); }, {randn({2, 3}, 31)}},
      {"matmul", [](G&, const Vs& in) { return matmul(in[0], in[1]); }, {randn({3, 4}, 32), randn({4, 2}, 33)}},
      {"transpose", [](G&, const Vs& in) { return transpose(in[0]); }, {randn({3, 4}, 34)}},
      {"normalize", [](G&, const Vs& in) { return normalize(in[0], 1, 1e-10); }, {randn({2, 5, 3, 3}, 35)}},
      {"concat_slice",
       [](G&, const Vs& in) { return slice(concat<double>({in[0], in[1]}, 1), 1, 1, 5); },
       {randn({2, 3, 2}, 36), randn({2, 4, 2}, 37)}},
      {"sum_axis", [](G&, const Vs& in) { return sum_axis(in[0], 1); }, {randn({2, 3, 4}, 38)}},
      {"div", [](G&, const Vs& in) { return div(in[0], in[1]); }, {randn({3, 4}, 39), positive}},
      {"mul_sub", [](G&, const Vs& in) { return sub(mul(in[0], in[1]), in[1]); }, {randn({5}, 40), randn({5}, 41)}},
      {"exp_log", [](G&, const Vs& in) { return log(exp(in[0])); }, {randn({5}, 42)}},
      {"tanh_sigmoid", [](G&, const Vs& in) { return tanh(sigmoid(in[0])); }, {randn({5}, 43)}},
      {"abs_square", [](G&, const Vs& in) { return add(abs(in[0]), square(in[0])); }, {randn({6}, 44)}},
      {"gather", [](G&, const Vs& in) { return gather_rows(in[0], {2, 0, 2}); }, {randn({4, 3}, 45)}},
      {"batchnorm_train",
       [](G&, const Vs& in) {
         const Tensor<double> rm({3}), rv({3}, 1.0);
         return batchnorm2d(in[0], in[1], in[2], rm, rv, BatchNormOptions{true}, "bn.");
       },
       {randn({2, 3, 3, 3}, 46), randn({3}, 47), randn({3}, 48)}},
      {"batchnorm_eval",
       [](G&, const Vs& in) {
         const Tensor<double> rm({3}, 0.2), rv({3}, 1.5);
         return batchnorm2d(in[0], in[1], in[2], rm, rv, BatchNormOptions{false}, "bn.");
       },
       {randn({2, 3, 3, 3}, 49), randn({3}, 50), randn({3}, 51)}},
  };
  for (const auto& c : cases) {
    SCOPED_TRACE(c.name);
    GradCheckOptions opt;
    opt.max_per_tensor = 0;
    expect_grad_ok(grad_check(c.fn, c.inputs, nullptr, opt));
  }
}

TEST(BatchNorm, RunningStatisticsUpdate) {
  G g;
  const Tensor<double> rm({2}), rv({2}, 1.0);
  Tensor<double> x({2, 2, 1, 1}, std::vector<double>{1, 2, 3, 6});
  batchnorm2d(g.leaf(x), g.leaf(Tensor<double>({2}, 1.0)), g.leaf(Tensor<double>({2})), rm, rv,
              BatchNormOptions{true, 0.1, 1e-5}, "bn.");
  ASSERT_EQ(g.buffer_updates().size(), 2u);
  // channel 0: samples {1, 3} -> mean 2, unbiased var 2
  EXPECT_NEAR(g.buffer_updates()[0].second[0], 0.2, 1e-12);
  EXPECT_NEAR(g.buffer_updates()[1].second[0], 0.9 + 0.2, 1e-12);
}

TEST(ParamStore, CountParameters) {
  ParamStore<float> empty;
  EXPECT_EQ(empty.count_parameters(), 0u);
  ParamStore<float> store;
  Rng rng(7);
  declare_conv(store, "c", conv_spec(64, 64), rng);
  EXPECT_EQ(store.count_parameters(), 36928u);
  declare_batchnorm(store, "bn", 4);
  EXPECT_EQ(store.count_parameters(), 36928u + 8u);
}

TEST(Graph, FrozenParametersGetNoGradient) {
  ParamStore<double> store;
  store.add("a", Tensor<double>({2}, 1.0));
  store.add("b", Tensor<double>({2}, 2.0));
  store.set_frozen("b", true);
  G g;
  g.accumulate_into(store);
  g.backward(sum(mul(g.param(store, "a"), g.param(store, "b"))));
  EXPECT_EQ(store.at("a").grad[0], 2.0);
  EXPECT_EQ(store.at("b").grad[0], 0.0);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  ParamStore<double> store;
  store.add("w", randn({4}, 8));
  const auto before = store.value("w");
  AdamState<double> st;
  adam_step(store, st, 1e-2);
  EXPECT_EQ(store.value("w"), before);
}

TEST(Adam, FrozenParameterUnchanged) {
  ParamStore<double> store;
  store.add("w", randn({4}, 9));
  store.at("w").grad.fill(3.0);
  store.set_frozen("w", true);
  const auto before = store.value("w");
  AdamState<double> st;
  adam_step(store, st, 1e-2);
  EXPECT_EQ(store.value("w"), before);
}

TEST(Adam, ScalarQuadraticConverges) {
  ParamStore<double> store;
  store.add("x", Tensor<double>({1}, 5.0));
  AdamState<double> st;
  for (int i = 0; i < 500; ++i) {
    store.zero_grad();
    G g;
    g.accumulate_into(store);
    g.backward(square(add_scalar(g.param(store, "x"), -1.5)));
    adam_step(store, st, 0.05);
  }
  EXPECT_NEAR(store.value("x")[0], 1.5, 1e-2);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  ParamStore<double> store;
  store.add("gen.w", Tensor<double>({1}));
  store.at("gen.w").grad[0] = std::nan("");
  AdamState<double> st;
  try {
    adam_step(store, st, 1e-3);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("gen.w"), std::string::npos);
  }
}

TEST(Checkpoint, RoundTripPreservesEverything) {
  Rng rng(10);
  for (int trial = 0; trial < 5; ++trial) {
    CheckpointData ck;
    ck.meta = {{"epoch", trial}, {"note", "x"}};
    declare_conv(ck.params, "g.c", conv_spec(2 + trial, 3), rng);
    declare_batchnorm(ck.params, "d.bn", 3);
    ck.params.set_frozen("g.", trial % 2 == 0);
    ck.state.emplace("adam.m.g.c.weight", normal_tensor<float>({3, 2 + static_cast<std::size_t>(trial), 3, 3}, 1, rng));
    const CheckpointData back = deserialize_checkpoint(serialize_checkpoint(ck));
    EXPECT_EQ(back.meta, ck.meta);
    ASSERT_EQ(back.params.size(), ck.params.size());
    for (const auto& [name, p] : ck.params) {
      EXPECT_EQ(back.params.at(name).value, p.value) << name;
      EXPECT_EQ(back.params.at(name).frozen, p.frozen) << name;
      EXPECT_EQ(back.params.at(name).buffer, p.buffer) << name;
    }
    EXPECT_EQ(back.state, ck.state);
  }
}

TEST(Checkpoint, RejectsGarbage) {
  EXPECT_THROW(deserialize_checkpoint("not a checkpoint at all"), LoadError);
  std::string bytes = serialize_checkpoint(CheckpointData{});
  bytes[8] = 9;
  EXPECT_THROW(deserialize_checkpoint(bytes), LoadError);
}

}  // namespace
}  // namespace tgjar::nn
