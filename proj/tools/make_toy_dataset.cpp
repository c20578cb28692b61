// Copyright (c) 2026 The TGJAR Authors
// SPDX-License-Identifier: Apache-2.0

// Writes a synthetic captioned dataset (colored birds and flowers).

#include <iostream>

#include "CLI11.hpp"
#include "tgjar/data/toy_dataset.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Synthetic captioned image dataset"};
  std::string out;
  std::size_t count = 8, size = 64;
  std::uint64_t seed = 1;
  app.add_option("--out", out, "Dataset root to create")->required();
  app.add_option("--count", count, "Number of images")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--size", size, "Image side in pixels")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--seed", seed, "Scene seed")->capture_default_str();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  try {
    tgjar::data::write_toy_dataset(out, count, size, seed);
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return 2;
  }
  return 0;
}
