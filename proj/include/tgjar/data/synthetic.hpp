// Copyright (c) 2026 The TGJAR Authors
// SPDX-License-Identifier: Apache-2.0

// Deterministic captioned scenes (a colored object on a textured gradient
// background) used for toy datasets, examples and tests.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "tgjar/core/tensor.hpp"

namespace tgjar::data {

struct NamedColor {
  const char* name;
  std::array<double, 3> rgb;
};

inline constexpr std::array<NamedColor, 10> kSceneColors = {{
    {"red", {0.85, 0.12, 0.10}},
    {"green", {0.15, 0.65, 0.20}},
    {"blue", {0.12, 0.25, 0.85}},
    {"yellow", {0.95, 0.85, 0.15}},
    {"white", {0.95, 0.95, 0.93}},
    {"black", {0.08, 0.08, 0.10}},
    {"orange", {0.95, 0.55, 0.10}},
    {"purple", {0.55, 0.20, 0.70}},
    {"pink", {0.95, 0.55, 0.70}},
    {"brown", {0.50, 0.32, 0.16}},
}};

inline constexpr std::array<const char*, 2> kSceneObjects = {"bird", "flower"};

struct SceneSpec {
  std::size_t object_color = 0;
  std::size_t background_color = 1;
  std::size_t object = 0;
};

struct Scene {
  Image<float> image;
  std::string caption;
  SceneSpec spec;
};

inline std::string scene_caption(const SceneSpec& s) {
  return std::string("a ") + kSceneColors[s.object_color].name + " " + kSceneObjects[s.object] + " on a " +
         kSceneColors[s.background_color].name + " background";
}

// Renders `spec` with layout/texture randomness drawn from `seed`.
inline Scene render_scene(const SceneSpec& spec, std::size_t size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto& fg = kSceneColors[spec.object_color].rgb;
  const auto& bg = kSceneColors[spec.background_color].rgb;
  const double cx = 0.3 + 0.4 * u(rng), cy = 0.3 + 0.4 * u(rng);
  const double rx = 0.15 + 0.15 * u(rng), ry = 0.12 + 0.15 * u(rng);
  const double angle = 3.14159265358979 * u(rng);
  const double fx = 2 + 6 * u(rng), fy = 2 + 6 * u(rng), phase = 6.28 * u(rng);
  const double tex_amp = 0.05 + 0.08 * u(rng);
  const double shade = 0.2 + 0.2 * u(rng);
  std::normal_distribution<double> noise(0.0, 0.015);

  Image<float> img({3, size, size});
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double px = (x + 0.5) / size, py = (y + 0.5) / size;
      const double grad = 0.75 + 0.35 * py;
      const double tex = tex_amp * std::sin(6.28 * (fx * px + fy * py) + phase) * std::cos(6.28 * fy * px);
      const double dx = px - cx, dy = py - cy;
      const double lx = (ca * dx + sa * dy) / rx, ly = (-sa * dx + ca * dy) / ry;
      const double r2 = lx * lx + ly * ly;
      // Soft object edge spanning roughly one pixel.
      const double edge = std::clamp((1.0 - std::sqrt(r2)) * rx * size * 0.7 + 0.5, 0.0, 1.0);
      // Petal/feather stripes on the object.
      const double stripes = spec.object == 1 ? 0.12 * std::cos(5 * std::atan2(ly, lx))
                                              : 0.08 * std::sin(10 * lx + 4 * ly);
      for (std::size_t c = 0; c < 3; ++c) {
        const double b = bg[c] * grad + tex;
        const double f = fg[c] * (1.0 - shade * r2) + stripes;
        const double v = edge * f + (1.0 - edge) * b + noise(rng);
        img.at(c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return {std::move(img), scene_caption(spec), spec};
}

inline Scene random_scene(std::size_t size, std::uint64_t seed) {
  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + 17);
  std::uniform_int_distribution<std::size_t> color(0, kSceneColors.size() - 1);
  std::uniform_int_distribution<std::size_t> object(0, kSceneObjects.size() - 1);
  SceneSpec s;
  s.object_color = color(rng);
  do {
    s.background_color = color(rng);
  } while (s.background_color == s.object_color);
  s.object = object(rng);
  return render_scene(s, size, seed);
}

// I.i.d. uniform pixels; for tests that want no spatial structure.
template <class T>
Image<T> uniform_noise_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image<T> img({3, h, w});
  for (auto& v : img.storage()) v = static_cast<T>(u(rng));
  return img;
}

}  // namespace tgjar::data
