// Copyright (c) 2026 The TGJAR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "tgjar/core/error.hpp"
#include "tgjar/model/config.hpp"
#include "tgjar/nn/layers.hpp"

namespace tgjar::model {

template <class T>
void declare_discriminator(nn::ParamStore<T>& store, const DiscriminatorConfig& cfg, nn::Rng& rng) {
  std::size_t cin = 3;
  for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
    const std::string name = "discriminator.block" + std::to_string(i);
    nn::declare_conv(store, name + ".conv", nn::conv_spec(cin, cfg.channels[i], 3, 2, 1), rng);
    if (i > 0) nn::declare_batchnorm(store, name + ".bn", cfg.channels[i]);
    nn::declare_prelu(store, name + ".act", cfg.channels[i]);
    cin = cfg.channels[i];
  }
  nn::declare_fc(store, "discriminator.fc", cin, 1, rng);
}

// img: (N, 3, H, W), H and W divisible by 16. Returns (N, 1) probabilities in
// [eps, 1 - eps]. Batchnorm running statistics are pushed as buffer updates
// when `bn.training` is set.
template <class T>
nn::Var<T> discriminate(nn::Graph<T>& g, const nn::ParamStore<T>& store, const DiscriminatorConfig& cfg,
                        const nn::Var<T>& img, const nn::BatchNormOptions& bn) {
  if (img.value().rank() != 4 || img.dim(1) != 3 || img.dim(2) % 16 != 0 || img.dim(3) % 16 != 0) {
    throw ShapeError("discriminator input must be (N,3,H,W) with H, W divisible by 16, got " +
                     shape_str(img.shape()));
  }
  std::size_t cin = 3;
  nn::Var<T> h = img;
  for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
    const std::string name = "discriminator.block" + std::to_string(i);
    h = nn::conv(g, store, name + ".conv", h, nn::conv_spec(cin, cfg.channels[i], 3, 2, 1));
    if (i > 0) h = nn::batchnorm(g, store, name + ".bn", h, bn);
    h = nn::prelu(g, store, name + ".act", h);
    cin = cfg.channels[i];
  }
  const nn::Var<T> logit = nn::fc(g, store, "discriminator.fc", nn::gap(h));
  return nn::clamp(nn::sigmoid(logit), static_cast<T>(cfg.eps_clamp), static_cast<T>(1 - cfg.eps_clamp));
}

}  // namespace tgjar::model
