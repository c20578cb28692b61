// Copyright (c) 2026 The TGJAR Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "tgjar/data/synthetic.hpp"
#include "tgjar/jpeg/codec.hpp"
#include "tgjar/metrics/psnr.hpp"

namespace tgjar::jpeg {
namespace {

// Direct O(N^4) evaluation of the JPEG FDCT definition.
Block reference_dct(const Block& b) {
  Block out{};
  for (int v = 0; v < 8; ++v)
    for (int u = 0; u < 8; ++u) {
      const double cu = u == 0 ? 1 / std::sqrt(2.0) : 1.0;
      const double cv = v == 0 ? 1 / std::sqrt(2.0) : 1.0;
      double acc = 0;
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
          acc += b[y * 8 + x] * std::cos((2 * x + 1) * u * std::numbers::pi / 16) *
                 std::cos((2 * y + 1) * v * std::numbers::pi / 16);
      out[v * 8 + u] = 0.25 * cu * cv * acc;
    }
  return out;
}

Block random_block(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-128, 127);
  Block b{};
  for (auto& v : b) v = u(rng);
  return b;
}

TEST(QuantTable, WorkedValues) {
  EXPECT_EQ(scale_quant_table(kLumaBaseTable, QualityFactor(50))[0], 16);
  EXPECT_EQ(scale_quant_table(kLumaBaseTable, QualityFactor(1))[0], 255);
  for (int v : scale_quant_table(kLumaBaseTable, QualityFactor(100))) EXPECT_EQ(v, 1);
  for (int v : scale_quant_table(kChromaBaseTable, QualityFactor(100))) EXPECT_EQ(v, 1);
  // Hand-computed: entry 11, qf 10 -> scale 500 -> (5500 + 50) / 100 = 55.
  EXPECT_EQ(scale_quant_table(kLumaBaseTable, QualityFactor(10))[1], 55);
  // Entry 99, qf 75 -> scale 50 -> (4950 + 50) / 100 = 50.
  EXPECT_EQ(scale_quant_table(kChromaBaseTable, QualityFactor(75))[63], 50);
}

TEST(QuantTable, EntriesStayInRange) {
  for (int q = 1; q <= 100; ++q) {
    for (const auto* base : {&kLumaBaseTable, &kChromaBaseTable}) {
      for (int v : scale_quant_table(*base, QualityFactor(q))) {
        EXPECT_GE(v, 1);
        EXPECT_LE(v, 255);
      }
    }
  }
}

TEST(QuantTable, RejectsOutOfRangeQuality) {
  EXPECT_THROW(QualityFactor(0), DomainError);
  EXPECT_THROW(QualityFactor(101), DomainError);
}

TEST(Dct, ZeroBlock) {
  for (double v : dct8x8(Block{})) EXPECT_EQ(v, 0.0);
}

TEST(Dct, MatchesDefinition) {
  const Block b = random_block(3);
  const Block fast = dct8x8(b), ref = reference_dct(b);
  for (int i = 0; i < kBlockSize; ++i) EXPECT_NEAR(fast[i], ref[i], 1e-9);
}

TEST(Dct, RoundTripAndParseval) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Block b = random_block(seed);
    const Block c = dct8x8(b);
    const Block r = idct8x8(c);
    double max_err = 0, e_in = 0, e_out = 0;
    for (int i = 0; i < kBlockSize; ++i) {
      max_err = std::max(max_err, std::abs(r[i] - b[i]));
      e_in += b[i] * b[i];
      e_out += c[i] * c[i];
    }
    EXPECT_LT(max_err, 1e-10);
    EXPECT_NEAR(e_in, e_out, 1e-8 * e_in);
  }
}

TEST(Color, WhiteAndBlack) {
  Image<double> white({3, 16, 16}, 1.0), black({3, 16, 16}, 0.0);
  const auto w = rgb_to_ycbcr(white), b = rgb_to_ycbcr(black);
  EXPECT_NEAR(w.at(0, 0, 0), 1.0, 1e-6);
  EXPECT_NEAR(w.at(1, 0, 0), 128.0 / 255, 1e-5);
  EXPECT_NEAR(w.at(2, 0, 0), 128.0 / 255, 1e-5);
  EXPECT_NEAR(b.at(0, 0, 0), 0.0, 1e-9);
  EXPECT_NEAR(b.at(1, 0, 0), 128.0 / 255, 1e-9);
  EXPECT_NEAR(b.at(2, 0, 0), 128.0 / 255, 1e-9);
}

TEST(Color, RoundTripWithinTwoLevels) {
  const auto img = data::uniform_noise_image<double>(32, 32, 11);
  const auto back = ycbcr_to_rgb(rgb_to_ycbcr(img));
  double max_err = 0;
  for (std::size_t i = 0; i < img.size(); ++i) max_err = std::max(max_err, std::abs(img[i] - back[i]));
  EXPECT_LE(max_err, 2.0 / 255);
}

TEST(Degrade, UniformGraySurvives) {
  for (int q : {1, 5, 10, 50, 100}) {
    for (auto ss : {Subsampling::k420, Subsampling::k444}) {
      Image<float> gray({3, 32, 32}, 0.5f);
      const auto out = degrade(gray, QualityFactor(q), ss);
      for (float v : out.values()) EXPECT_NEAR(v, 0.5f, 1.0 / 255);
    }
  }
}

TEST(Degrade, Deterministic) {
  const auto img = data::random_scene(64, 5).image;
  EXPECT_EQ(degrade(img, QualityFactor(5)), degrade(img, QualityFactor(5)));
}

TEST(Degrade, RejectsBadDimensions) {
  Image<float> img({3, 24, 32}, 0.5f);
  EXPECT_THROW(degrade(img, QualityFactor(10)), ShapeError);
}

TEST(Degrade, QualityMonotoneOverImages) {
  const int qfs[] = {1, 5, 10, 50, 90};
  double mean[5] = {};
  for (std::uint64_t s = 0; s < 16; ++s) {
    const auto img = data::random_scene(64, 100 + s).image;
    for (int k = 0; k < 5; ++k) mean[k] += metrics::psnr(img, degrade(img, QualityFactor(qfs[k]))) / 16;
  }
  for (int k = 0; k + 1 < 5; ++k) EXPECT_LT(mean[k], mean[k + 1]) << "qf " << qfs[k];
}

TEST(Degrade, NearLosslessAtQuality100) {
  for (std::uint64_t s = 0; s < 8; ++s) {
    const auto img = data::random_scene(64, 200 + s).image;
    EXPECT_GE(metrics::psnr(img, degrade(img, QualityFactor(100), Subsampling::k444)), 45.0);
  }
}

TEST(Degrade, BlockBoundariesDominateAtQuality1) {
  double across = 0, within = 0;
  std::size_t n_across = 0, n_within = 0;
  for (std::uint64_t s = 0; s < 8; ++s) {
    const auto out = degrade(data::random_scene(64, 300 + s).image, QualityFactor(1));
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 64; ++y)
        for (std::size_t x = 0; x + 1 < 64; ++x) {
          const double d = std::abs(out.at(c, y, x + 1) - out.at(c, y, x));
          if ((x + 1) % 8 == 0) {
            across += d;
            ++n_across;
          } else {
            within += d;
            ++n_within;
          }
        }
  }
  EXPECT_GT(across / n_across, within / n_within);
}

}  // namespace
}  // namespace tgjar::jpeg
