// Copyright (c) 2026 The TGJAR Authors
// SPDX-License-Identifier: Apache-2.0

// Training objectives: contrastive (perceptual-space), reconstruction,
// adversarial and image-text semantic (DAMSM) losses and their weighted sum.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tgjar/core/error.hpp"
#include "tgjar/metrics/perceptual.hpp"
#include "tgjar/model/config.hpp"
#include "tgjar/model/encoders.hpp"

namespace tgjar::model {

struct LossWeights {
  double lambda1 = 0.01;    // contrastive
  double lambda2 = 1.0;     // reconstruction
  double lambda3 = 0.001;   // adversarial
  double lambda4 = 0.0005;  // image-text semantic
  double c = 0.1;

  void validate() const {
    if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0 || lambda4 < 0) throw DomainError("loss weights must be >= 0");
    if (!(c > 0)) throw DomainError("contrastive constant c must be > 0");
  }
};

struct LossReport {
  double l_c = 0, l_r = 0, l_g = 0, l_it = 0, total = 0;
};

// Weighted sum of already-computed components; rejects non-finite inputs.
inline LossReport total_loss(double l_c, double l_r, double l_g, double l_it, const LossWeights& w) {
  w.validate();
  const std::pair<const char*, double> parts[] = {{"l_c", l_c}, {"l_r", l_r}, {"l_g", l_g}, {"l_it", l_it}};
  for (const auto& [name, v] : parts) {
    if (!std::isfinite(v)) throw NumericError(std::string("loss component ") + name + " is not finite");
  }
  return {l_c, l_r, l_g, l_it, w.lambda1 * l_c + w.lambda2 * l_r + w.lambda3 * l_g + w.lambda4 * l_it};
}

// Mean over the batch of F(id, i) / (F(id, ic) + c).
template <class T>
Var<T> contrastive_loss(Graph<T>& g, const metrics::PerceptualExtractor<T>& f, const Var<T>& id, const Var<T>& i,
                        const Var<T>& ic, double c) {
  if (!(c > 0)) throw DomainError("contrastive constant c must be > 0");
  require_same_shape(id.shape(), i.shape(), "contrastive_loss");
  require_same_shape(id.shape(), ic.shape(), "contrastive_loss");
  const Var<T> pos = metrics::perceptual_distance(g, f, id, i);
  const Var<T> neg = metrics::perceptual_distance(g, f, id, ic);
  return nn::mean(nn::div(pos, nn::add_scalar(neg, static_cast<T>(c))));
}

// Unsimplified ratio |(F(id,i) - F(i,i)) / (F(id,i) - F(ic,i))|, batch mean.
// Not used by the trainer: it is singular whenever the restored and the
// compressed image sit at the same distance from the reference.
template <class T>
Var<T> contrastive_loss_unsimplified(Graph<T>& g, const metrics::PerceptualExtractor<T>& f, const Var<T>& id,
                                     const Var<T>& i, const Var<T>& ic) {
  require_same_shape(id.shape(), i.shape(), "contrastive_loss_unsimplified");
  require_same_shape(id.shape(), ic.shape(), "contrastive_loss_unsimplified");
  const Var<T> d_pos = metrics::perceptual_distance(g, f, id, i);
  const Var<T> num = nn::sub(d_pos, metrics::perceptual_distance(g, f, i, i));
  const Var<T> den = nn::sub(d_pos, metrics::perceptual_distance(g, f, ic, i));
  return nn::mean(nn::abs(nn::div(num, den)));
}

template <class T>
Var<T> reconstruction_loss(const Var<T>& id, const Var<T>& i) {
  require_same_shape(id.shape(), i.shape(), "reconstruction_loss");
  return nn::mean(nn::abs(nn::sub(id, i)));
}

struct GanLosses {
  double d_loss = 0, g_loss = 0;
};

inline GanLosses gan_losses(double d_real, double d_fake) {
  return {-(std::log(d_real) + std::log(1.0 - d_fake)), -std::log(d_fake)};
}

// Batch means of -[log D(real) + log(1 - D(fake))].
template <class T>
Var<T> discriminator_loss(const Var<T>& d_real, const Var<T>& d_fake) {
  const Var<T> fake_term = nn::log(nn::add_scalar(nn::scale(d_fake, T(-1)), T(1)));
  return nn::scale(nn::add(nn::mean(nn::log(d_real)), nn::mean(fake_term)), T(-1));
}

// Non-saturating generator term -log D(fake), batch mean.
template <class T>
Var<T> generator_adversarial_loss(const Var<T>& d_fake) {
  return nn::scale(nn::mean(nn::log(d_fake)), T(-1));
}

template <class T>
struct DamsmLosses {
  Var<T> word;
  Var<T> sentence;
};

namespace detail {

// Symmetric cross-entropy of a (B, B) similarity matrix whose diagonal holds
// the matched pairs: rows score captions per image, columns images per caption.
template <class T>
Var<T> matched_cross_entropy(Graph<T>& g, const Var<T>& sim) {
  const std::size_t b = sim.dim(0);
  Tensor<T> eye({b, b});
  for (std::size_t k = 0; k < b; ++k) eye[k * b + k] = T(1);
  const Var<T> diag = g.constant(std::move(eye));
  const Var<T> rows = nn::sum(nn::mul(nn::log_softmax(sim, 1), diag));
  const Var<T> cols = nn::sum(nn::mul(nn::log_softmax(sim, 0), diag));
  return nn::scale(nn::add(rows, cols), T(-1) / static_cast<T>(b));
}

inline constexpr double kCosineEps = 1e-8;

}  // namespace detail

// Region-word relevance of one image (regions (D, R)) and one caption
// (words (D, T)): words attend over regions with sharpness gamma1, each word's
// cosine to its region context is pooled by log-sum-exp with gamma2, and the
// result is scaled by gamma3.
template <class T>
Var<T> word_region_score(const Var<T>& regions, const Var<T>& words, const DamsmConfig& cfg) {
  const Var<T> attn = nn::softmax(nn::matmul(nn::transpose(regions), words), 1);  // (R, T), over words
  const Var<T> over_regions = nn::softmax(nn::scale(nn::transpose(attn), static_cast<T>(cfg.gamma1)), 1);  // (T, R)
  const Var<T> context = nn::matmul(regions, nn::transpose(over_regions));                                  // (D, T)
  const T eps = static_cast<T>(detail::kCosineEps);
  const Var<T> cos = nn::sum_axis(nn::mul(nn::normalize(nn::transpose(words), 1, eps),
                                          nn::normalize(nn::transpose(context), 1, eps)),
                                  1);  // (T)
  const Var<T> pooled = nn::log(nn::sum(nn::exp(nn::scale(cos, static_cast<T>(cfg.gamma2)))));
  return nn::scale(pooled, static_cast<T>(cfg.gamma3));
}

// regions[k]: (D, R); globals: (B, D); words[k]: (D, T_k); sentences: (B, D).
template <class T>
DamsmLosses<T> damsm_loss(Graph<T>& g, const std::vector<Var<T>>& regions, const Var<T>& globals,
                          const std::vector<Var<T>>& words, const Var<T>& sentences, const DamsmConfig& cfg) {
  const std::size_t b = regions.size();
  if (b == 0) throw DomainError("damsm_loss needs a non-empty batch");
  if (words.size() != b || globals.dim(0) != b || sentences.dim(0) != b) {
    throw ShapeError("damsm_loss: images and captions must be matched by index");
  }
  if (globals.dim(1) != sentences.dim(1)) throw ShapeError("damsm_loss: image and text dimensions differ");
  std::vector<Var<T>> cells;
  cells.reserve(b * b);
  for (std::size_t k = 0; k < b; ++k)
    for (std::size_t i = 0; i < b; ++i) cells.push_back(word_region_score(regions[k], words[i], cfg));
  const Var<T> word_sim = nn::reshape(nn::concat(cells, 0), {b, b});

  const T eps = static_cast<T>(detail::kCosineEps);
  const Var<T> sent_sim =
      nn::scale(nn::matmul(nn::normalize(globals, 1, eps), nn::transpose(nn::normalize(sentences, 1, eps))),
                static_cast<T>(cfg.gamma3));
  return {detail::matched_cross_entropy(g, word_sim), detail::matched_cross_entropy(g, sent_sim)};
}

}  // namespace tgjar::model
