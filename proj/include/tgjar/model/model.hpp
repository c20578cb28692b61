// Copyright (c) 2026 The TGJAR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "tgjar/model/config.hpp"
#include "tgjar/model/discriminator.hpp"
#include "tgjar/model/encoders.hpp"
#include "tgjar/model/generator.hpp"

namespace tgjar::model {

// Declares every trainable network of the system in one store, with names
// prefixed text_encoder.*, image_encoder.*, generator.* and discriminator.*.
template <class T>
nn::ParamStore<T> build_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  nn::ParamStore<T> store;
  nn::Rng rng(seed);
  declare_text_encoder(store, cfg.text, rng);
  declare_image_encoder(store, cfg.image_encoder, cfg.text.dim, rng);
  declare_generator(store, cfg.generator, cfg.text.dim, rng);
  declare_discriminator(store, cfg.discriminator, rng);
  return store;
}

// Trainable scalars under `prefix` (every network when empty).
template <class T>
std::size_t count_parameters(const nn::ParamStore<T>& store, const std::string& prefix = "") {
  return store.count_parameters(prefix);
}

}  // namespace tgjar::model
