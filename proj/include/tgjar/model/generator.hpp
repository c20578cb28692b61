// Copyright (c) 2026 The TGJAR Authors
// SPDX-License-Identifier: Apache-2.0

// Text-guided U-Net deblocking generator.
//
//   enc0  Conv3(3->C)            S      enc1 Conv3/2(C->C)   S/2
//   enc2  Conv3/2(C->B)          S/4    enc3 Conv3/2(B->B)   S/8
//   bottleneck: residual blocks, GFM after the third
//   dec_k: upsample x2, concat [up, encoder skip, LFM(previous scale)], Conv3
//   head: Conv3(C->3), optionally added to the input
//
// Every conv except the head is followed by PReLU.

#pragma once

#include <string>
#include <vector>

#include "tgjar/core/error.hpp"
#include "tgjar/model/config.hpp"
#include "tgjar/model/fusion.hpp"
#include "tgjar/nn/layers.hpp"

namespace tgjar::model {

namespace detail {

struct DecoderStage {
  std::size_t in_channels;    // channels of the previous decoder scale (upsampled and attended)
  std::size_t skip_channels;  // encoder features at the target scale
  std::size_t out_channels;
};

inline std::array<DecoderStage, 3> decoder_plan(const GeneratorConfig& c) {
  const std::size_t C = c.base_channels, B = c.bottleneck_channels;
  return {{{B, B, B}, {B, C, C}, {C, C, C}}};
}

inline std::array<nn::LayerSpec, 4> encoder_plan(const GeneratorConfig& c) {
  const std::size_t C = c.base_channels, B = c.bottleneck_channels;
  return {{nn::conv_spec(3, C), nn::conv_spec(C, C, 3, 2, 1), nn::conv_spec(C, B, 3, 2, 1),
           nn::conv_spec(B, B, 3, 2, 1)}};
}

}  // namespace detail

template <class T>
void declare_generator(ParamStore<T>& store, const GeneratorConfig& cfg, std::size_t text_dim, nn::Rng& rng) {
  const auto enc = detail::encoder_plan(cfg);
  for (std::size_t i = 0; i < enc.size(); ++i) {
    const std::string name = "generator.enc" + std::to_string(i);
    nn::declare_conv(store, name + ".conv", enc[i], rng);
    nn::declare_prelu(store, name + ".act", enc[i].channels_out);
  }
  for (std::size_t i = 0; i < cfg.n_resblocks; ++i) {
    nn::declare_residual_block(store, "generator.res" + std::to_string(i), cfg.bottleneck_channels, rng);
  }
  declare_gfm(store, "generator.gfm", cfg.bottleneck_channels, text_dim, rng);
  const auto dec = detail::decoder_plan(cfg);
  for (std::size_t i = 0; i < dec.size(); ++i) {
    const std::string name = "generator.dec" + std::to_string(i);
    declare_lfm(store, "generator.lfm" + std::to_string(i), dec[i].in_channels, text_dim, rng);
    nn::declare_conv(store, name + ".conv",
                     nn::conv_spec(2 * dec[i].in_channels + dec[i].skip_channels, dec[i].out_channels), rng);
    nn::declare_prelu(store, name + ".act", dec[i].out_channels);
  }
  nn::declare_conv(store, "generator.head", nn::conv_spec(cfg.base_channels, 3), rng);
}

template <class T>
struct GeneratorOutput {
  Var<T> image;  // (N, 3, H, W) in [0, 1]
  // attention[stage][n]: (T_n, h*w) at scales S/8, S/4, S/2.
  std::vector<std::vector<Var<T>>> attention;
};

// ic: (N, 3, H, W) with H, W divisible by 8; words[n]: (D, T_n); sentence: (N, D).
template <class T>
GeneratorOutput<T> generate(Graph<T>& g, const ParamStore<T>& store, const GeneratorConfig& cfg, const Var<T>& ic,
                            const std::vector<Var<T>>& words, const Var<T>& sentence) {
  if (ic.value().rank() != 4 || ic.dim(1) != 3 || ic.dim(2) % 8 != 0 || ic.dim(3) % 8 != 0 || ic.dim(2) == 0) {
    throw ShapeError("generator input must be (N,3,H,W) with H, W divisible by 8, got " + shape_str(ic.shape()));
  }
  if (cfg.n_resblocks < 3) throw DomainError("generator needs at least 3 residual blocks");
  const auto enc = detail::encoder_plan(cfg);
  std::vector<Var<T>> skips;
  Var<T> h = ic;
  for (std::size_t i = 0; i < enc.size(); ++i) {
    const std::string name = "generator.enc" + std::to_string(i);
    h = nn::prelu(g, store, name + ".act", nn::conv(g, store, name + ".conv", h, enc[i]));
    skips.push_back(h);
  }
  for (std::size_t i = 0; i < cfg.n_resblocks; ++i) {
    h = nn::residual_block(g, store, "generator.res" + std::to_string(i), h);
    if (i == 2) h = gfm(g, store, "generator.gfm", h, sentence);
  }
  GeneratorOutput<T> out;
  const auto dec = detail::decoder_plan(cfg);
  for (std::size_t i = 0; i < dec.size(); ++i) {
    const std::string name = "generator.dec" + std::to_string(i);
    auto local = lfm(g, store, "generator.lfm" + std::to_string(i), h, words);
    out.attention.push_back(std::move(local.attention));
    const Var<T> merged = nn::concat<T>({nn::upsample_nearest2x(h), skips[2 - i], local.features}, 1);
    h = nn::conv(g, store, name + ".conv", merged,
                 nn::conv_spec(2 * dec[i].in_channels + dec[i].skip_channels, dec[i].out_channels));
    h = nn::prelu(g, store, name + ".act", h);
  }
  Var<T> y = nn::conv(g, store, "generator.head", h, nn::conv_spec(cfg.base_channels, 3));
  if (cfg.use_global_residual) y = nn::add(ic, y);
  out.image = nn::clamp(y, T(0), T(1));
  if (!out.image.value().all_finite()) throw NumericError("generator produced a non-finite activation");
  return out;
}

}  // namespace tgjar::model
