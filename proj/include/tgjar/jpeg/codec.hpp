// Copyright (c) 2026 The TGJAR Authors
// SPDX-License-Identifier: Apache-2.0

// JPEG degradation simulator. Runs the lossy half of a baseline JPEG
// encoder/decoder pair (color transform, chroma subsampling, 8x8 DCT,
// quantization and their inverses) without emitting a bitstream.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "tgjar/core/error.hpp"
#include "tgjar/core/tensor.hpp"

namespace tgjar::jpeg {

constexpr int kBlockDim = 8;
constexpr int kBlockSize = kBlockDim * kBlockDim;

using Block = std::array<double, kBlockSize>;
using QuantTable = std::array<int, kBlockSize>;

class QualityFactor {
 public:
  explicit QualityFactor(int value) : value_(value) {
    if (value < 1 || value > 100) {
      throw DomainError("quality factor must be in [1,100], got " + std::to_string(value));
    }
  }
  int value() const { return value_; }

 private:
  int value_;
};

enum class Subsampling { k444, k420 };

inline Subsampling parse_subsampling(const std::string& s) {
  if (s == "444") return Subsampling::k444;
  if (s == "420") return Subsampling::k420;
  throw DomainError("subsampling must be 444 or 420, got '" + s + "'");
}

// ITU-T T.81 Annex K reference tables, row-major.
inline constexpr QuantTable kLumaBaseTable = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};

inline constexpr QuantTable kChromaBaseTable = {
    17, 18, 24, 47, 99, 99, 99, 99,  //
    18, 21, 26, 66, 99, 99, 99, 99,  //
    24, 26, 56, 99, 99, 99, 99, 99,  //
    47, 66, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99};

// IJG quality scaling, integer arithmetic.
inline QuantTable scale_quant_table(const QuantTable& base, QualityFactor qf) {
  const int q = qf.value();
  const int scale = q < 50 ? 5000 / q : 200 - 2 * q;
  QuantTable out{};
  for (int i = 0; i < kBlockSize; ++i) {
    const int v = (base[i] * scale + 50) / 100;
    out[i] = std::clamp(v, 1, 255);
  }
  return out;
}

namespace detail {

struct DctBasis {
  // basis[u][x] = alpha(u) * cos((2x+1) u pi / 16)
  std::array<std::array<double, kBlockDim>, kBlockDim> basis{};
  DctBasis() {
    for (int u = 0; u < kBlockDim; ++u) {
      const double alpha = u == 0 ? std::sqrt(1.0 / kBlockDim) : std::sqrt(2.0 / kBlockDim);
      for (int x = 0; x < kBlockDim; ++x) {
        basis[u][x] = alpha * std::cos((2 * x + 1) * u * std::numbers::pi / (2.0 * kBlockDim));
      }
    }
  }
};

inline const DctBasis& dct_basis() {
  static const DctBasis b;
  return b;
}

}  // namespace detail

// Orthonormal 2-D type-II DCT (the JPEG FDCT scaling).
inline Block dct8x8(const Block& block) {
  const auto& c = detail::dct_basis().basis;
  Block tmp{}, out{};
  for (int y = 0; y < kBlockDim; ++y) {
    for (int u = 0; u < kBlockDim; ++u) {
      double acc = 0;
      for (int x = 0; x < kBlockDim; ++x) acc += c[u][x] * block[y * kBlockDim + x];
      tmp[y * kBlockDim + u] = acc;
    }
  }
  for (int v = 0; v < kBlockDim; ++v) {
    for (int u = 0; u < kBlockDim; ++u) {
      double acc = 0;
      for (int y = 0; y < kBlockDim; ++y) acc += c[v][y] * tmp[y * kBlockDim + u];
      out[v * kBlockDim + u] = acc;
    }
  }
  return out;
}

inline Block idct8x8(const Block& coeffs) {
  const auto& c = detail::dct_basis().basis;
  Block tmp{}, out{};
  for (int v = 0; v < kBlockDim; ++v) {
    for (int x = 0; x < kBlockDim; ++x) {
      double acc = 0;
      for (int u = 0; u < kBlockDim; ++u) acc += c[u][x] * coeffs[v * kBlockDim + u];
      tmp[v * kBlockDim + x] = acc;
    }
  }
  for (int y = 0; y < kBlockDim; ++y) {
    for (int x = 0; x < kBlockDim; ++x) {
      double acc = 0;
      for (int v = 0; v < kBlockDim; ++v) acc += c[v][y] * tmp[v * kBlockDim + x];
      out[y * kBlockDim + x] = acc;
    }
  }
  return out;
}

// JFIF full-range conversion on [0,1]-scaled planes; chroma is offset by
// 128/255. Outputs are clamped to [0,1].
template <class T>
Image<T> rgb_to_ycbcr(const Image<T>& rgb) {
  if (rgb.rank() != 3 || rgb.dim(0) != 3) throw ShapeError("rgb_to_ycbcr expects 3xHxW");
  const std::size_t plane = rgb.dim(1) * rgb.dim(2);
  Image<T> out(rgb.shape());
  constexpr double kOffset = 128.0 / 255.0;
  for (std::size_t i = 0; i < plane; ++i) {
    const double r = rgb[i], g = rgb[plane + i], b = rgb[2 * plane + i];
    const double y = 0.299 * r + 0.587 * g + 0.114 * b;
    const double cb = -0.168736 * r - 0.331264 * g + 0.5 * b + kOffset;
    const double cr = 0.5 * r - 0.418688 * g - 0.081312 * b + kOffset;
    out[i] = static_cast<T>(std::clamp(y, 0.0, 1.0));
    out[plane + i] = static_cast<T>(std::clamp(cb, 0.0, 1.0));
    out[2 * plane + i] = static_cast<T>(std::clamp(cr, 0.0, 1.0));
  }
  return out;
}

template <class T>
Image<T> ycbcr_to_rgb(const Image<T>& ycc) {
  if (ycc.rank() != 3 || ycc.dim(0) != 3) throw ShapeError("ycbcr_to_rgb expects 3xHxW");
  const std::size_t plane = ycc.dim(1) * ycc.dim(2);
  Image<T> out(ycc.shape());
  constexpr double kOffset = 128.0 / 255.0;
  for (std::size_t i = 0; i < plane; ++i) {
    const double y = ycc[i], cb = ycc[plane + i] - kOffset, cr = ycc[2 * plane + i] - kOffset;
    out[i] = static_cast<T>(std::clamp(y + 1.402 * cr, 0.0, 1.0));
    out[plane + i] = static_cast<T>(std::clamp(y - 0.344136 * cb - 0.714136 * cr, 0.0, 1.0));
    out[2 * plane + i] = static_cast<T>(std::clamp(y + 1.772 * cb, 0.0, 1.0));
  }
  return out;
}

namespace detail {

// Plane in 0..255 sample units.
struct Plane {
  std::size_t height = 0, width = 0;
  std::vector<double> v;
  double& at(std::size_t y, std::size_t x) { return v[y * width + x]; }
  double at(std::size_t y, std::size_t x) const { return v[y * width + x]; }
};

inline void quantize_plane(Plane& p, const QuantTable& table) {
  for (std::size_t by = 0; by < p.height; by += kBlockDim) {
    for (std::size_t bx = 0; bx < p.width; bx += kBlockDim) {
      Block blk{};
      for (int y = 0; y < kBlockDim; ++y)
        for (int x = 0; x < kBlockDim; ++x) blk[y * kBlockDim + x] = p.at(by + y, bx + x) - 128.0;
      Block coef = dct8x8(blk);
      for (int i = 0; i < kBlockSize; ++i) coef[i] = std::round(coef[i] / table[i]) * table[i];
      const Block rec = idct8x8(coef);
      for (int y = 0; y < kBlockDim; ++y)
        for (int x = 0; x < kBlockDim; ++x) p.at(by + y, bx + x) = rec[y * kBlockDim + x] + 128.0;
    }
  }
}

inline Plane downsample2x2(const Plane& p) {
  Plane out{p.height / 2, p.width / 2, {}};
  out.v.resize(out.height * out.width);
  for (std::size_t y = 0; y < out.height; ++y)
    for (std::size_t x = 0; x < out.width; ++x)
      out.at(y, x) = 0.25 * (p.at(2 * y, 2 * x) + p.at(2 * y, 2 * x + 1) +
                             p.at(2 * y + 1, 2 * x) + p.at(2 * y + 1, 2 * x + 1));
  return out;
}

inline Plane upsample2x2(const Plane& p) {
  Plane out{p.height * 2, p.width * 2, {}};
  out.v.resize(out.height * out.width);
  for (std::size_t y = 0; y < out.height; ++y)
    for (std::size_t x = 0; x < out.width; ++x) out.at(y, x) = p.at(y / 2, x / 2);
  return out;
}

}  // namespace detail

// Compress-decompress round trip I^c = F_c(I, qf). Pure function of its
// arguments; the result lies on the 8-bit grid like a decoded JPEG.
template <class T>
Image<T> degrade(const Image<T>& img, QualityFactor qf, Subsampling subsampling = Subsampling::k420) {
  validate_image(img, 16);
  const std::size_t h = img.dim(1), w = img.dim(2), plane = h * w;
  const QuantTable luma = scale_quant_table(kLumaBaseTable, qf);
  const QuantTable chroma = scale_quant_table(kChromaBaseTable, qf);

  // Unclamped JFIF transform in sample units.
  std::array<detail::Plane, 3> ycc;
  for (auto& p : ycc) p = detail::Plane{h, w, std::vector<double>(plane)};
  for (std::size_t i = 0; i < plane; ++i) {
    const double r = 255.0 * img[i], g = 255.0 * img[plane + i], b = 255.0 * img[2 * plane + i];
    ycc[0].v[i] = 0.299 * r + 0.587 * g + 0.114 * b;
    ycc[1].v[i] = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0;
    ycc[2].v[i] = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0;
  }

  detail::quantize_plane(ycc[0], luma);
  for (int c = 1; c < 3; ++c) {
    if (subsampling == Subsampling::k420) {
      detail::Plane small = detail::downsample2x2(ycc[c]);
      detail::quantize_plane(small, chroma);
      ycc[c] = detail::upsample2x2(small);
    } else {
      detail::quantize_plane(ycc[c], chroma);
    }
  }

  Image<T> out(img.shape());
  auto to_unit = [](double v) { return static_cast<T>(std::round(std::clamp(v, 0.0, 255.0)) / 255.0); };
  for (std::size_t i = 0; i < plane; ++i) {
    const double y = ycc[0].v[i], cb = ycc[1].v[i] - 128.0, cr = ycc[2].v[i] - 128.0;
    out[i] = to_unit(y + 1.402 * cr);
    out[plane + i] = to_unit(y - 0.344136 * cb - 0.714136 * cr);
    out[2 * plane + i] = to_unit(y + 1.772 * cb);
  }
  return out;
}

}  // namespace tgjar::jpeg
