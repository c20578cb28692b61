// Copyright (c) 2026 The TGJAR Authors
// SPDX-License-Identifier: Apache-2.0

// Image-text fusion. The global module conditions a bottleneck feature map on
// the sentence vector; the local module attends from every spatial location
// over the words of the caption.

#pragma once

#include <string>
#include <vector>

#include "tgjar/core/error.hpp"
#include "tgjar/nn/layers.hpp"

namespace tgjar::model {

using nn::Graph;
using nn::ParamStore;
using nn::Var;

template <class T>
void declare_gfm(ParamStore<T>& store, const std::string& name, std::size_t channels, std::size_t dim, nn::Rng& rng) {
  nn::declare_conv(store, name + ".pool_conv", nn::conv_spec(channels, channels), rng);
  nn::declare_fc(store, name + ".fc1", channels + dim, channels, rng);
  nn::declare_fc(store, name + ".fc2", channels, channels, rng);
  nn::declare_conv(store, name + ".fuse_conv", nn::conv_spec(2 * channels, channels), rng);
}

// x: (N, C, h, w); sentence: (N, D). Returns (N, C, h, w).
template <class T>
Var<T> gfm(Graph<T>& g, const ParamStore<T>& store, const std::string& name, const Var<T>& x, const Var<T>& sentence) {
  const std::size_t channels = store.value(name + ".fc2.bias").dim(0);
  if (x.value().rank() != 4 || x.dim(1) != channels) {
    throw ShapeError(name + ": expected " + std::to_string(channels) + " channels, got " + shape_str(x.shape()));
  }
  if (sentence.value().rank() != 2 || sentence.dim(0) != x.dim(0) ||
      sentence.dim(1) + channels != store.value(name + ".fc1.weight").dim(1)) {
    throw ShapeError(name + ": sentence features " + shape_str(sentence.shape()) + " do not match");
  }
  const Var<T> pooled = nn::gap(nn::conv(g, store, name + ".pool_conv", x, nn::conv_spec(channels, channels)));
  Var<T> h = nn::fc(g, store, name + ".fc1", nn::concat<T>({pooled, sentence}, 1));
  h = nn::fc(g, store, name + ".fc2", h);
  const Var<T> tiled = nn::repeat_spatial(h, x.dim(2), x.dim(3));
  return nn::conv(g, store, name + ".fuse_conv", nn::concat<T>({x, tiled}, 1), nn::conv_spec(2 * channels, channels));
}

template <class T>
void declare_lfm(ParamStore<T>& store, const std::string& name, std::size_t channels, std::size_t dim, nn::Rng& rng) {
  // Pointwise conv over the word axis, stored as a dense (C, D) map.
  nn::declare_fc(store, name + ".word_proj", dim, channels, rng);
}

template <class T>
struct LfmOutput {
  Var<T> features;                // (N, C, 2h, 2w)
  std::vector<Var<T>> attention;  // per image: (T_n, h*w), columns sum to 1
};

// x: (N, C, h, w); words[n]: (D, T_n).
template <class T>
LfmOutput<T> lfm(Graph<T>& g, const ParamStore<T>& store, const std::string& name, const Var<T>& x,
                 const std::vector<Var<T>>& words) {
  const Tensor<T>& proj = store.value(name + ".word_proj.weight");
  const std::size_t channels = proj.dim(0), dim = proj.dim(1);
  if (x.value().rank() != 4 || x.dim(1) != channels) {
    throw ShapeError(name + ": expected " + std::to_string(channels) + " channels, got " + shape_str(x.shape()));
  }
  if (words.size() != x.dim(0)) throw ShapeError(name + ": one word matrix per image is required");
  const std::size_t h = x.dim(2), w = x.dim(3), cells = h * w;
  LfmOutput<T> out;
  std::vector<Var<T>> contexts;
  for (std::size_t n = 0; n < words.size(); ++n) {
    const Var<T>& wn = words[n];
    if (wn.value().rank() != 2 || wn.dim(0) != dim || wn.dim(1) == 0) {
      throw ShapeError(name + ": word features " + shape_str(wn.shape()) + " do not match D=" + std::to_string(dim));
    }
    const Var<T> projected = nn::fc(g, store, name + ".word_proj", nn::transpose(wn));  // (T, C)
    const Var<T> xn = nn::reshape(nn::slice(x, 0, n, n + 1), {channels, cells});
    const Var<T> scores = nn::matmul(nn::transpose(xn), nn::transpose(projected));  // (HW, T)
    const Var<T> attn = nn::softmax(scores, 1);
    const Var<T> context = nn::matmul(nn::transpose(projected), nn::transpose(attn));  // (C, HW)
    contexts.push_back(nn::reshape(context, {1, channels, h, w}));
    out.attention.push_back(nn::transpose(attn));
  }
  out.features = nn::upsample_nearest2x(nn::concat(contexts, 0));
  return out;
}

}  // namespace tgjar::model
