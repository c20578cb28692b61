// Copyright (c) 2026 The TGJAR Authors
// SPDX-License-Identifier: Apache-2.0

// Writes synthetic scenes as an on-disk dataset (images/*.png, captions/*.txt).

#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>

#include "tgjar/data/image_io.hpp"
#include "tgjar/data/synthetic.hpp"

namespace tgjar::data {

inline void write_toy_dataset(const std::string& root, std::size_t count, std::size_t size, std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(root) / "images");
  fs::create_directories(fs::path(root) / "captions");
  for (std::size_t i = 0; i < count; ++i) {
    const Scene s = random_scene(size, seed + i);
    char stem[32];
    std::snprintf(stem, sizeof stem, "scene_%04zu", i);
    write_png((fs::path(root) / "images" / (std::string(stem) + ".png")).string(), s.image);
    write_file((fs::path(root) / "captions" / (std::string(stem) + ".txt")).string(), s.caption + "\n");
  }
}

}  // namespace tgjar::data
