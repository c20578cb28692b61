// Copyright (c) 2026 The TGJAR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "tgjar/core/error.hpp"
#include "tgjar/nn/param_store.hpp"

namespace tgjar::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
struct AdamState {
  std::int64_t step = 0;
  std::map<std::string, Tensor<T>> m;
  std::map<std::string, Tensor<T>> v;
};

// One bias-corrected Adam update over the trainable entries under `prefix`.
// Frozen entries and buffers are skipped; gradients are left untouched.
template <class T>
void adam_step(ParamStore<T>& store, AdamState<T>& state, double lr, const AdamConfig& cfg = {},
               std::string_view prefix = {}) {
  for (const auto& [name, p] : store) {
    if (p.frozen || p.buffer || !name.starts_with(prefix)) continue;
    if (!p.grad.all_finite()) throw NumericError("non-finite gradient for parameter '" + name + "'");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (auto& [name, p] : store) {
    if (p.frozen || p.buffer || !name.starts_with(prefix)) continue;
    auto [mit, m_new] = state.m.try_emplace(name, p.value.shape());
    auto [vit, v_new] = state.v.try_emplace(name, p.value.shape());
    T* m = mit->second.data();
    T* v = vit->second.data();
    T* w = p.value.data();
    const T* g = p.grad.data();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      m[i] = static_cast<T>(cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i]);
      v[i] = static_cast<T>(cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i]);
      const double mhat = m[i] / bc1, vhat = v[i] / bc2;
      w[i] = static_cast<T>(w[i] - lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

}  // namespace tgjar::nn
