// Copyright (c) 2026 The TGJAR Authors
// SPDX-License-Identifier: Apache-2.0

// Text and image encoders that map captions and images into a common
// D-dimensional semantic space.

#pragma once

#include <string>
#include <vector>

#include "tgjar/core/error.hpp"
#include "tgjar/model/config.hpp"
#include "tgjar/nn/checkpoint.hpp"
#include "tgjar/nn/layers.hpp"

namespace tgjar::model {

using nn::Graph;
using nn::ParamStore;
using nn::Var;

inline constexpr std::size_t kUnkId = 0;
inline constexpr std::size_t kPadId = 1;

struct Caption {
  std::vector<std::size_t> tokens;
  std::string raw;
};

inline void validate_caption(const Caption& c, const TextEncoderConfig& cfg) {
  if (c.tokens.empty()) throw DomainError("empty caption");
  if (c.tokens.size() > cfg.max_len) {
    throw DomainError("caption has " + std::to_string(c.tokens.size()) + " tokens; max_len is " +
                      std::to_string(cfg.max_len));
  }
  for (std::size_t id : c.tokens) {
    if (id >= cfg.vocab_size) {
      throw DomainError("token id " + std::to_string(id) + " outside vocabulary of " +
                        std::to_string(cfg.vocab_size));
    }
  }
}

template <class T>
struct TextFeatures {
  Var<T> words;     // (D, T)
  Var<T> sentence;  // (1, D)
};

template <class T>
void declare_text_encoder(ParamStore<T>& store, const TextEncoderConfig& cfg, nn::Rng& rng) {
  store.add("text_encoder.embedding", nn::normal_tensor<T>({cfg.vocab_size, cfg.embed_dim}, 1.0, rng));
  nn::declare_bilstm(store, "text_encoder.lstm", cfg.embed_dim, cfg.dim / 2, rng);
}

template <class T>
TextFeatures<T> encode_text(Graph<T>& g, const ParamStore<T>& store, const TextEncoderConfig& cfg,
                            const Caption& caption) {
  validate_caption(caption, cfg);
  const Var<T> emb = nn::gather_rows(g.param(store, "text_encoder.embedding"), caption.tokens);
  const auto lstm = nn::bilstm_forward(g, store, "text_encoder.lstm", emb);
  return {nn::transpose(lstm.hidden_states), lstm.final_state};
}

template <class T>
struct BatchTextFeatures {
  std::vector<Var<T>> words;  // per caption: (D, T_k)
  Var<T> sentences;           // (B, D)
};

template <class T>
BatchTextFeatures<T> encode_captions(Graph<T>& g, const ParamStore<T>& store, const TextEncoderConfig& cfg,
                                     const std::vector<Caption>& captions) {
  if (captions.empty()) throw DomainError("no captions to encode");
  BatchTextFeatures<T> out;
  std::vector<Var<T>> sentences;
  for (const auto& c : captions) {
    auto f = encode_text(g, store, cfg, c);
    out.words.push_back(f.words);
    sentences.push_back(f.sentence);
  }
  out.sentences = nn::concat(sentences, 0);
  return out;
}

template <class T>
struct ImageFeatures {
  Var<T> regions;  // (N, D, R)
  Var<T> global;   // (N, D)
};

inline constexpr std::size_t kMinEncoderSide = 64;

inline std::array<nn::LayerSpec, 6> image_backbone_specs(const ImageEncoderConfig& cfg) {
  const auto& c = cfg.channels;
  return {{nn::conv_spec(3, c[0], 3, 1, 1), nn::conv_spec(c[0], c[1], 3, 2, 1), nn::conv_spec(c[1], c[2], 3, 2, 1),
           nn::conv_spec(c[2], c[3], 3, 2, 1), nn::conv_spec(c[3], c[4], 3, 1, 1),
           nn::conv_spec(c[4], c[5], 4, 2, 2)}};
}

// Side length of the region grid for a square input of side `side`.
inline std::size_t region_grid_side(const ImageEncoderConfig& cfg, std::size_t side) {
  for (const auto& s : image_backbone_specs(cfg)) side = s.conv().out_size(side);
  return side;
}

template <class T>
void declare_image_encoder(ParamStore<T>& store, const ImageEncoderConfig& cfg, std::size_t dim, nn::Rng& rng) {
  const auto specs = image_backbone_specs(cfg);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const std::string name = "image_encoder.block" + std::to_string(i);
    nn::declare_conv(store, name + ".conv", specs[i], rng);
    nn::declare_prelu(store, name + ".act", specs[i].channels_out);
  }
  nn::declare_conv(store, "image_encoder.regions", nn::conv_spec(cfg.channels[5], dim, 1, 1, 0), rng);
  nn::declare_fc(store, "image_encoder.global", cfg.channels[5], dim, rng);
}

// Mapping layers only: projects backbone features (N, C, h, w) into D.
template <class T>
ImageFeatures<T> map_image_features(Graph<T>& g, const ParamStore<T>& store, const ImageEncoderConfig& cfg,
                                    const Var<T>& backbone) {
  const std::size_t n = backbone.dim(0), cells = backbone.dim(2) * backbone.dim(3);
  const std::size_t dim = store.value("image_encoder.global.bias").dim(0);
  const Var<T> r = nn::conv(g, store, "image_encoder.regions", backbone, nn::conv_spec(cfg.channels[5], dim, 1, 1, 0));
  const Var<T> gl = nn::fc(g, store, "image_encoder.global", nn::gap(backbone));
  return {nn::reshape(r, {n, dim, cells}), gl};
}

// x: (N, 3, H, W) with H, W >= 64.
template <class T>
ImageFeatures<T> encode_image(Graph<T>& g, const ParamStore<T>& store, const ImageEncoderConfig& cfg,
                              const Var<T>& x) {
  if (x.value().rank() != 4 || x.dim(1) != 3) {
    throw ShapeError("encode_image expects (N,3,H,W), got " + shape_str(x.shape()));
  }
  if (x.dim(2) < kMinEncoderSide || x.dim(3) < kMinEncoderSide) {
    throw ShapeError("encode_image needs sides >= 64, got " + shape_str(x.shape()));
  }
  const auto specs = image_backbone_specs(cfg);
  Var<T> h = x;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const std::string name = "image_encoder.block" + std::to_string(i);
    h = nn::prelu(g, store, name + ".act", nn::conv(g, store, name + ".conv", h, specs[i]));
  }
  return map_image_features(g, store, cfg, h);
}

// Features for image n of a batch: regions (D, R) and global (1, D).
template <class T>
std::pair<Var<T>, Var<T>> image_features_at(const ImageFeatures<T>& f, std::size_t n) {
  const Var<T> r = nn::slice(f.regions, 0, n, n + 1);
  return {nn::reshape(r, {r.dim(1), r.dim(2)}), nn::slice(f.global, 0, n, n + 1)};
}

// Precomputed features from an external backbone, stored in the checkpoint
// container as state tensors "regions" (N, D, R) and "global" (N, D).
template <class T>
ImageFeatures<T> load_external_image_features(Graph<T>& g, const std::string& path, std::size_t dim) {
  const nn::CheckpointData data = nn::load_checkpoint(path);
  const auto r = data.state.find("regions");
  const auto gl = data.state.find("global");
  if (r == data.state.end() || gl == data.state.end()) {
    throw LoadError(path + ": expected state tensors 'regions' and 'global'");
  }
  if (r->second.rank() != 3 || gl->second.rank() != 2 || r->second.dim(1) != dim || gl->second.dim(1) != dim ||
      r->second.dim(0) != gl->second.dim(0)) {
    throw ShapeError(path + ": external features do not match D=" + std::to_string(dim));
  }
  return {g.constant(r->second.template cast<T>()), g.constant(gl->second.template cast<T>())};
}

}  // namespace tgjar::model
