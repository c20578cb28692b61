// Copyright (c) 2026 The TGJAR Authors
// SPDX-License-Identifier: Apache-2.0

// Parameterized layers. Each layer has a `declare_*` function that registers
// its tensors in a ParamStore and a forward function that reads them back by
// name, so the same forward code serves training and frozen inference.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <regex>
#include <string>
#include <vector>

#include "tgjar/core/error.hpp"
#include "tgjar/core/tensor.hpp"
#include "tgjar/nn/graph.hpp"
#include "tgjar/nn/ops.hpp"
#include "tgjar/nn/param_store.hpp"

namespace tgjar::nn {

using Rng = std::mt19937_64;

inline constexpr double kPReluInitSlope = 0.25;

template <class T>
Tensor<T> normal_tensor(Shape shape, double stddev, Rng& rng) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.storage()) v = static_cast<T>(dist(rng));
  return t;
}

// Convolution layer geometry, including the "Conv3-64-1-1" naming scheme
// (kernel 3, 64 filters, stride 1, padding 1).
struct LayerSpec {
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
  std::size_t channels_in = 0;
  std::size_t channels_out = 0;

  Conv2dSpec conv() const { return {kernel, stride, padding}; }

  static LayerSpec parse(const std::string& name, std::size_t channels_in) {
    static const std::regex re(R"(Conv(\d+)-(\d+)(?:-(\d+)-(\d+))?)");
    std::smatch m;
    if (!std::regex_match(name, m, re)) throw DomainError("bad layer name '" + name + "'");
    LayerSpec s;
    s.kernel = std::stoul(m[1]);
    s.channels_out = std::stoul(m[2]);
    s.stride = m[3].matched ? std::stoul(m[3]) : 1;
    s.padding = m[4].matched ? std::stoul(m[4]) : s.kernel / 2;
    s.channels_in = channels_in;
    return s;
  }
};

inline LayerSpec conv_spec(std::size_t cin, std::size_t cout, std::size_t kernel = 3, std::size_t stride = 1,
                           std::size_t padding = 1) {
  return LayerSpec{kernel, stride, padding, cin, cout};
}

// Kaiming fan-in normal weights, zero bias.
template <class T>
void declare_conv(ParamStore<T>& store, const std::string& name, const LayerSpec& s, Rng& rng) {
  const double fan_in = static_cast<double>(s.channels_in * s.kernel * s.kernel);
  store.add(name + ".weight",
            normal_tensor<T>({s.channels_out, s.channels_in, s.kernel, s.kernel}, std::sqrt(2.0 / fan_in), rng));
  store.add(name + ".bias", Tensor<T>({s.channels_out}));
}

template <class T>
Var<T> conv(Graph<T>& g, const ParamStore<T>& store, const std::string& name, const Var<T>& x, const LayerSpec& s) {
  if (x.value().rank() != 4 || x.dim(1) != s.channels_in) {
    throw ShapeError(name + ": expected " + std::to_string(s.channels_in) + " input channels, got " +
                     shape_str(x.shape()));
  }
  return conv2d(x, g.param(store, name + ".weight"), g.param(store, name + ".bias"), s.conv());
}

template <class T>
void declare_fc(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  store.add(name + ".weight", normal_tensor<T>({out, in}, std::sqrt(2.0 / static_cast<double>(in)), rng));
  store.add(name + ".bias", Tensor<T>({out}));
}

template <class T>
Var<T> fc(Graph<T>& g, const ParamStore<T>& store, const std::string& name, const Var<T>& x) {
  return linear(x, g.param(store, name + ".weight"), g.param(store, name + ".bias"));
}

template <class T>
void declare_prelu(ParamStore<T>& store, const std::string& name, std::size_t channels) {
  store.add(name + ".slope", Tensor<T>({channels}, static_cast<T>(kPReluInitSlope)));
}

template <class T>
Var<T> prelu(Graph<T>& g, const ParamStore<T>& store, const std::string& name, const Var<T>& x) {
  return prelu(x, g.param(store, name + ".slope"));
}

template <class T>
void declare_batchnorm(ParamStore<T>& store, const std::string& name, std::size_t channels) {
  store.add(name + ".gamma", Tensor<T>({channels}, T(1)));
  store.add(name + ".beta", Tensor<T>({channels}));
  store.add(name + ".running_mean", Tensor<T>({channels}), /*buffer=*/true);
  store.add(name + ".running_var", Tensor<T>({channels}, T(1)), /*buffer=*/true);
}

template <class T>
Var<T> batchnorm(Graph<T>& g, const ParamStore<T>& store, const std::string& name, const Var<T>& x,
                 const BatchNormOptions& opt) {
  return batchnorm2d(x, g.param(store, name + ".gamma"), g.param(store, name + ".beta"),
                     store.value(name + ".running_mean"), store.value(name + ".running_var"), opt, name + ".");
}

// resblock-C: x + Conv3-C(PReLU(Conv3-C(x))).
template <class T>
void declare_residual_block(ParamStore<T>& store, const std::string& name, std::size_t width, Rng& rng) {
  declare_conv(store, name + ".conv1", conv_spec(width, width), rng);
  declare_prelu(store, name + ".act", width);
  declare_conv(store, name + ".conv2", conv_spec(width, width), rng);
}

template <class T>
Var<T> residual_block(Graph<T>& g, const ParamStore<T>& store, const std::string& name, const Var<T>& x) {
  if (x.value().rank() != 4) throw ShapeError(name + ": residual block expects NCHW");
  const std::size_t width = x.dim(1);
  const LayerSpec s = conv_spec(width, width);
  Var<T> h = conv(g, store, name + ".conv1", x, s);
  h = prelu(g, store, name + ".act", h);
  h = conv(g, store, name + ".conv2", h, s);
  return add(x, h);
}

// ---------------------------------------------------------------------------
// Bi-directional LSTM

template <class T>
void declare_lstm_direction(ParamStore<T>& store, const std::string& name, std::size_t input, std::size_t hidden,
                            Rng& rng) {
  const double sd = 1.0 / std::sqrt(static_cast<double>(hidden));
  store.add(name + ".w_ih", normal_tensor<T>({4 * hidden, input}, sd, rng));
  store.add(name + ".w_hh", normal_tensor<T>({4 * hidden, hidden}, sd, rng));
  Tensor<T> bias({4 * hidden});
  for (std::size_t i = hidden; i < 2 * hidden; ++i) bias[i] = T(1);  // forget gate
  store.add(name + ".bias", std::move(bias));
}

// `hidden` is the per-direction width (D/2).
template <class T>
void declare_bilstm(ParamStore<T>& store, const std::string& name, std::size_t input, std::size_t hidden, Rng& rng) {
  declare_lstm_direction(store, name + ".fw", input, hidden, rng);
  declare_lstm_direction(store, name + ".bw", input, hidden, rng);
}

template <class T>
struct BiLstmResult {
  Var<T> hidden_states;  // (T, 2H)
  Var<T> final_state;    // (1, 2H)
};

namespace detail {

// Runs one direction over `inputs` (T, De); returns per-step hidden rows in
// time order.
template <class T>
std::vector<Var<T>> lstm_direction(Graph<T>& g, const ParamStore<T>& store, const std::string& name,
                                   const Var<T>& inputs, bool reverse) {
  const Var<T> w_hh = g.param(store, name + ".w_hh");
  const std::size_t hidden = w_hh.dim(1), steps = inputs.dim(0);
  const Var<T> projected = linear(inputs, g.param(store, name + ".w_ih"), g.param(store, name + ".bias"));
  const Var<T> no_bias = g.constant(Tensor<T>({4 * hidden}));
  Var<T> h = g.constant(Tensor<T>({1, hidden}));
  Var<T> c = g.constant(Tensor<T>({1, hidden}));
  std::vector<Var<T>> out(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t t = reverse ? steps - 1 - k : k;
    const Var<T> gates = add(slice(projected, 0, t, t + 1), linear(h, w_hh, no_bias));
    const Var<T> i = sigmoid(slice(gates, 1, 0, hidden));
    const Var<T> f = sigmoid(slice(gates, 1, hidden, 2 * hidden));
    const Var<T> gg = tanh(slice(gates, 1, 2 * hidden, 3 * hidden));
    const Var<T> o = sigmoid(slice(gates, 1, 3 * hidden, 4 * hidden));
    c = add(mul(f, c), mul(i, gg));
    h = mul(o, tanh(c));
    out[t] = h;
  }
  return out;
}

}  // namespace detail

// inputs: (T, De) embeddings. Each hidden row is [forward_t, backward_t]; the
// final state is [forward_{T-1}, backward_0].
template <class T>
BiLstmResult<T> bilstm_forward(Graph<T>& g, const ParamStore<T>& store, const std::string& name,
                               const Var<T>& inputs) {
  if (inputs.value().rank() != 2 || inputs.dim(0) == 0) throw DomainError("bilstm needs a non-empty sequence");
  const auto fw = detail::lstm_direction(g, store, name + ".fw", inputs, false);
  const auto bw = detail::lstm_direction(g, store, name + ".bw", inputs, true);
  std::vector<Var<T>> rows;
  rows.reserve(fw.size());
  for (std::size_t t = 0; t < fw.size(); ++t) rows.push_back(concat<T>({fw[t], bw[t]}, 1));
  return {concat(rows, 0), concat<T>({fw.back(), bw.front()}, 1)};
}

}  // namespace tgjar::nn
