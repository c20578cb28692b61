// Copyright (c) 2026 The TGJAR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <gtest/gtest.h>

#include <cmath>

#include "tgjar/model/config.hpp"
#include "tgjar/nn/grad_check.hpp"
#include "tgjar/nn/layers.hpp"

namespace tgjar::testing {

using G = nn::Graph<double>;
using V = nn::Var<double>;
using Vs = std::vector<V>;

inline constexpr double kPrimitiveTol = 1e-4;
inline constexpr double kCompositeTol = 1e-3;

inline Tensor<double> randn(Shape s, std::uint64_t seed, double sd = 1.0) {
  nn::Rng rng(seed);
  return nn::normal_tensor<double>(std::move(s), sd, rng);
}

inline Tensor<double> randu(Shape s, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(std::move(s));
  for (auto& v : t.storage()) v = u(rng);
  return t;
}

inline void expect_grad_ok(const nn::GradCheckReport& r, double tol) {
  EXPECT_TRUE(r.passed(tol)) << "max rel err " << r.max_rel_error << " at " << r.worst << " (checked " << r.checked
                             << ", kinks " << r.skipped_kinks << ")";
  EXPECT_LE(r.skipped_kinks, r.checked / 5 + 2);
}

inline double l2_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// Smallest layout the unit tests exercise: 4-channel U-Net, D = 6.
inline model::ModelConfig micro_config() {
  model::ModelConfig c;
  c.image_size = 16;
  c.text.vocab_size = 12;
  c.text.embed_dim = 5;
  c.text.dim = 6;
  c.text.max_len = 18;
  c.image_encoder.channels = {4, 4, 6, 6, 8, 8};
  c.generator = {4, 4, 3, 16, true};
  c.discriminator.channels = {4, 4, 6, 6};
  c.perceptual.channels = {4, 6, 8};
  return c;
}

}  // namespace tgjar::testing
