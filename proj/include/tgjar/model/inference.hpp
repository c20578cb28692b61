// Copyright (c) 2026 The TGJAR Authors
// SPDX-License-Identifier: Apache-2.0

// Eval-mode deblocking against an immutable parameter snapshot.

#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "tgjar/core/digest.hpp"
#include "tgjar/core/error.hpp"
#include "tgjar/data/dataset.hpp"
#include "tgjar/jpeg/codec.hpp"
#include "tgjar/metrics/perceptual.hpp"
#include "tgjar/model/config.hpp"
#include "tgjar/model/generator.hpp"
#include "tgjar/nn/checkpoint.hpp"

namespace tgjar::model {

// Checkpoint contents needed for inference. Read-only after construction, so
// one instance can serve concurrent requests.
struct LoadedModel {
  ModelConfig config;
  data::Vocabulary vocab;
  nn::ParamStore<float> params;
  std::string config_hash;
  std::string file_hash;  // SHA-256 of the checkpoint bytes, when loaded from a file
  nlohmann::json meta;
};

inline ModelConfig checkpoint_config(const nn::CheckpointData& ck) {
  if (!ck.meta.contains("model_config")) throw LoadError("checkpoint has no model_config");
  ModelConfig cfg = ck.meta.at("model_config").get<ModelConfig>();
  const std::string stored = ck.meta.value("config_hash", "");
  if (stored != config_hash(cfg)) throw LoadError("checkpoint config hash does not match its stored config");
  return cfg;
}

inline LoadedModel load_model(const nn::CheckpointData& ck) {
  LoadedModel m;
  m.config = checkpoint_config(ck);
  m.config_hash = config_hash(m.config);
  m.vocab = data::Vocabulary(ck.meta.at("vocab").get<std::vector<std::string>>());
  if (m.vocab.size() != m.config.text.vocab_size) throw LoadError("checkpoint vocabulary size disagrees with config");
  m.params = ck.params;
  m.meta = ck.meta;
  return m;
}

inline LoadedModel load_model_file(const std::string& path) {
  const std::string bytes = read_file(path);
  try {
    LoadedModel m = load_model(nn::deserialize_checkpoint(bytes));
    m.file_hash = sha256_hex(bytes);
    return m;
  } catch (const LoadError& e) {
    throw LoadError(path + ": " + e.what());
  }
}

// Raises ConfigMismatchError when `expected` differs from the checkpoint's.
inline void require_config(const LoadedModel& m, const ModelConfig& expected) {
  ModelConfig e = expected;
  e.text.vocab_size = m.config.text.vocab_size;
  const std::string want = config_hash(e);
  if (want != m.config_hash) {
    throw ConfigMismatchError("config hash mismatch: checkpoint has " + m.config_hash + ", requested config is " +
                              want);
  }
}

// Edge-replicates the bottom/right border so both sides are multiples of `m`.
template <class T>
Image<T> pad_to_multiple(const Image<T>& img, std::size_t m) {
  const std::size_t h = img.dim(1), w = img.dim(2);
  const std::size_t ph = (h + m - 1) / m * m, pw = (w + m - 1) / m * m;
  if (ph == h && pw == w) return img;
  Image<T> out({3, ph, pw});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < ph; ++y)
      for (std::size_t x = 0; x < pw; ++x) out.at(c, y, x) = img.at(c, std::min(y, h - 1), std::min(x, w - 1));
  return out;
}

template <class T>
Image<T> crop(const Image<T>& img, std::size_t h, std::size_t w) {
  Image<T> out({3, h, w});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y, x);
  return out;
}

// JPEG round trip for any size: the border is edge-replicated up to whole
// 16x16 MCUs, as a real encoder does, and cropped off afterwards.
template <class T>
Image<T> degrade_any_size(const Image<T>& img, jpeg::QualityFactor qf,
                          jpeg::Subsampling ss = jpeg::Subsampling::k420) {
  if (img.rank() != 3 || img.dim(0) != 3) throw ShapeError("expected a 3xHxW image");
  return crop(jpeg::degrade(pad_to_multiple(img, 16), qf, ss), img.dim(1), img.dim(2));
}

// Perceptual extractor with the checkpoint's weights when it carries them.
inline metrics::PerceptualExtractor<float> perceptual_for(const LoadedModel& m) {
  metrics::PerceptualExtractor<float> f(m.config.perceptual);
  bool present = false;
  nn::CheckpointData ck;
  for (const auto& [name, p] : m.params) {
    if (!name.starts_with("perceptual.")) continue;
    ck.params.add(name, p.value, p.buffer);
    present = true;
  }
  if (present) f.load_weights(ck);
  return f;
}

struct AttentionStage {
  std::size_t height = 0, width = 0;  // spatial size of the attended feature map
  Tensor<float> maps;                 // (T, height, width)
};

struct DeblockResult {
  Image<float> image;  // same size as the input, on the 8-bit grid
  std::vector<AttentionStage> attention;
};

inline constexpr std::size_t kInferenceMultiple = 16;

inline DeblockResult deblock(const LoadedModel& m, const Image<float>& compressed, const Caption& caption,
                             bool with_attention = false) {
  if (compressed.rank() != 3 || compressed.dim(0) != 3) throw ShapeError("expected a 3xHxW image");
  const std::size_t h = compressed.dim(1), w = compressed.dim(2);
  const Image<float> padded = pad_to_multiple(compressed, kInferenceMultiple);
  nn::Graph<float> g(false);
  const auto text = encode_text(g, m.params, m.config.text, caption);
  const auto x = g.constant(padded.reshaped({1, 3, padded.dim(1), padded.dim(2)}));
  const auto out = generate(g, m.params, m.config.generator, x, {text.words}, text.sentence);
  DeblockResult r;
  Image<float> full = out.image.value().reshaped({3, padded.dim(1), padded.dim(2)});
  r.image = data::quantize_8bit(crop(full, h, w));
  if (with_attention) {
    std::size_t sh = padded.dim(1) / 8, sw = padded.dim(2) / 8;
    for (const auto& stage : out.attention) {
      const Tensor<float>& a = stage[0].value();
      r.attention.push_back({sh, sw, a.reshaped({a.dim(0), sh, sw})});
      sh *= 2;
      sw *= 2;
    }
  }
  return r;
}

}  // namespace tgjar::model
