// Copyright (c) 2026 The TGJAR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "tgjar/core/digest.hpp"
#include "tgjar/core/error.hpp"

namespace tgjar::model {

struct TextEncoderConfig {
  std::size_t vocab_size = 2;
  std::size_t embed_dim = 128;
  std::size_t dim = 256;  // common semantic dimension D
  std::size_t max_len = 18;
};

// Six conv blocks; strides 1,2,2,2,1,2 (the last one 4x4 with padding 2), so a
// 256 input yields a 17x17 region grid and a 64 input a 5x5 grid.
struct ImageEncoderConfig {
  std::array<std::size_t, 6> channels = {32, 64, 128, 128, 256, 256};
};

struct GeneratorConfig {
  std::size_t base_channels = 64;
  std::size_t bottleneck_channels = 128;
  std::size_t n_resblocks = 6;
  std::size_t input_size = 256;
  bool use_global_residual = true;
};

struct DiscriminatorConfig {
  std::array<std::size_t, 4> channels = {64, 128, 256, 512};
  double eps_clamp = 1e-6;
};

struct PerceptualConfig {
  std::array<std::size_t, 3> channels = {16, 32, 64};
  std::uint64_t seed = 20230419;
};

struct DamsmConfig {
  double gamma1 = 5.0;
  double gamma2 = 5.0;
  double gamma3 = 10.0;
};

struct ModelConfig {
  std::size_t image_size = 256;
  TextEncoderConfig text;
  ImageEncoderConfig image_encoder;
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  PerceptualConfig perceptual;
  DamsmConfig damsm;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  // Full-size layout: 256 input, 128x32x32 bottleneck, D = 256.
  static ModelConfig full() { return ModelConfig{}; }

  // 64x64 images, D = 128, 64-channel bottleneck.
  static ModelConfig desk() {
    ModelConfig c;
    c.image_size = 64;
    c.text.dim = 128;
    c.text.embed_dim = 64;
    c.image_encoder.channels = {16, 32, 64, 64, 128, 128};
    c.generator = {32, 64, 6, 64, true};
    c.discriminator.channels = {16, 32, 64, 128};
    return c;
  }

  // Smallest layout that keeps every mechanism; used by the fast tests.
  static ModelConfig tiny() {
    ModelConfig c;
    c.image_size = 64;
    c.text.dim = 32;
    c.text.embed_dim = 32;
    c.image_encoder.channels = {8, 16, 32, 32, 64, 64};
    c.generator = {16, 32, 3, 64, true};
    c.discriminator.channels = {8, 16, 32, 64};
    return c;
  }

  void validate() const {
    if (image_size % 16 != 0) throw DomainError("image_size must be divisible by 16");
    if (generator.input_size != image_size) throw DomainError("generator.input_size must equal image_size");
    if (generator.n_resblocks < 3) throw DomainError("generator needs at least 3 residual blocks");
    if (text.dim % 2 != 0) throw DomainError("text dim must be even (two LSTM directions)");
    if (text.max_len < 1) throw DomainError("max_len must be positive");
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"image_size", c.image_size},
       {"text", {{"vocab_size", c.text.vocab_size}, {"embed_dim", c.text.embed_dim}, {"dim", c.text.dim},
                 {"max_len", c.text.max_len}}},
       {"image_encoder", {{"channels", c.image_encoder.channels}}},
       {"generator", {{"base_channels", c.generator.base_channels},
                      {"bottleneck_channels", c.generator.bottleneck_channels},
                      {"n_resblocks", c.generator.n_resblocks},
                      {"input_size", c.generator.input_size},
                      {"use_global_residual", c.generator.use_global_residual}}},
       {"discriminator", {{"channels", c.discriminator.channels}, {"eps_clamp", c.discriminator.eps_clamp}}},
       {"perceptual", {{"channels", c.perceptual.channels}, {"seed", c.perceptual.seed}}},
       {"damsm", {{"gamma1", c.damsm.gamma1}, {"gamma2", c.damsm.gamma2}, {"gamma3", c.damsm.gamma3}}},
       {"bn_momentum", c.bn_momentum},
       {"bn_eps", c.bn_eps}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c = ModelConfig{};
  c.image_size = j.value("image_size", c.image_size);
  if (j.contains("text")) {
    const auto& t = j.at("text");
    c.text.vocab_size = t.value("vocab_size", c.text.vocab_size);
    c.text.embed_dim = t.value("embed_dim", c.text.embed_dim);
    c.text.dim = t.value("dim", c.text.dim);
    c.text.max_len = t.value("max_len", c.text.max_len);
  }
  if (j.contains("image_encoder")) c.image_encoder.channels = j.at("image_encoder").at("channels");
  if (j.contains("generator")) {
    const auto& g = j.at("generator");
    c.generator.base_channels = g.value("base_channels", c.generator.base_channels);
    c.generator.bottleneck_channels = g.value("bottleneck_channels", c.generator.bottleneck_channels);
    c.generator.n_resblocks = g.value("n_resblocks", c.generator.n_resblocks);
    c.generator.input_size = g.value("input_size", c.generator.input_size);
    c.generator.use_global_residual = g.value("use_global_residual", c.generator.use_global_residual);
  }
  if (j.contains("discriminator")) {
    const auto& d = j.at("discriminator");
    c.discriminator.channels = d.value("channels", c.discriminator.channels);
    c.discriminator.eps_clamp = d.value("eps_clamp", c.discriminator.eps_clamp);
  }
  if (j.contains("perceptual")) {
    const auto& p = j.at("perceptual");
    c.perceptual.channels = p.value("channels", c.perceptual.channels);
    c.perceptual.seed = p.value("seed", c.perceptual.seed);
  }
  if (j.contains("damsm")) {
    const auto& d = j.at("damsm");
    c.damsm.gamma1 = d.value("gamma1", c.damsm.gamma1);
    c.damsm.gamma2 = d.value("gamma2", c.damsm.gamma2);
    c.damsm.gamma3 = d.value("gamma3", c.damsm.gamma3);
  }
  c.bn_momentum = j.value("bn_momentum", c.bn_momentum);
  c.bn_eps = j.value("bn_eps", c.bn_eps);
}

// SHA-256 of the canonical (key-sorted) JSON form.
inline std::string config_hash(const ModelConfig& c) { return sha256_hex(nlohmann::json(c).dump()); }

inline ModelConfig preset(const std::string& name) {
  if (name == "full") return ModelConfig::full();
  if (name == "desk") return ModelConfig::desk();
  if (name == "tiny") return ModelConfig::tiny();
  throw DomainError("unknown model preset '" + name + "' (expected full, desk or tiny)");
}

}  // namespace tgjar::model
