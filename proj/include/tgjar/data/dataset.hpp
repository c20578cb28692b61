// Copyright (c) 2026 The TGJAR Authors
// SPDX-License-Identifier: Apache-2.0

// Directory datasets (images/<stem>.{png,jpg,jpeg} + captions/<stem>.txt, one
// caption per line), vocabulary, tokenization and pair preparation.

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tgjar/core/error.hpp"
#include "tgjar/core/tensor.hpp"
#include "tgjar/data/image_io.hpp"
#include "tgjar/jpeg/codec.hpp"
#include "tgjar/model/encoders.hpp"

namespace tgjar::data {

namespace fs = std::filesystem;

struct DatasetEntry {
  std::string stem;
  std::string image_path;
  std::vector<std::string> caption_paths;
};

struct DatasetManifest {
  std::string root;
  std::string split = "train";
  std::string vocab_path;  // root/vocab.txt when present
  std::vector<DatasetEntry> entries;
};

inline bool is_image_extension(std::string ext) {
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

inline DatasetManifest load_dataset(const std::string& root, const std::string& split = "train") {
  const fs::path images = fs::path(root) / "images", captions = fs::path(root) / "captions";
  if (!fs::is_directory(images) || !fs::is_directory(captions)) {
    throw LoadError("dataset '" + root + "' must contain images/ and captions/ directories");
  }
  DatasetManifest m;
  m.root = root;
  m.split = split;
  if (fs::exists(fs::path(root) / "vocab.txt")) m.vocab_path = (fs::path(root) / "vocab.txt").string();
  for (const auto& e : fs::directory_iterator(images)) {
    if (!e.is_regular_file() || !is_image_extension(e.path().extension().string())) continue;
    const std::string stem = e.path().stem().string();
    const fs::path cap = captions / (stem + ".txt");
    if (!fs::is_regular_file(cap)) throw LoadError("no caption file for image '" + stem + "'");
    m.entries.push_back({stem, e.path().string(), {cap.string()}});
  }
  if (m.entries.empty()) throw LoadError("dataset '" + root + "' has no images");
  std::sort(m.entries.begin(), m.entries.end(), [](const auto& a, const auto& b) { return a.stem < b.stem; });
  for (std::size_t i = 1; i < m.entries.size(); ++i) {
    if (m.entries[i].stem == m.entries[i - 1].stem) {
      throw LoadError("duplicate image stem '" + m.entries[i].stem + "'");
    }
  }
  return m;
}

inline std::vector<std::string> read_captions(const DatasetEntry& e) {
  std::vector<std::string> out;
  for (const auto& path : e.caption_paths) {
    std::istringstream in(read_file(path));
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") != std::string::npos) out.push_back(line);
    }
  }
  if (out.empty()) throw LoadError("image '" + e.stem + "' has only empty captions");
  return out;
}

struct PairRef {
  std::size_t entry = 0;
  std::string caption;
};

// One (image, caption) pair per caption line, in manifest order.
inline std::vector<PairRef> enumerate_pairs(const DatasetManifest& m) {
  std::vector<PairRef> out;
  for (std::size_t i = 0; i < m.entries.size(); ++i)
    for (auto& c : read_captions(m.entries[i])) out.push_back({i, std::move(c)});
  return out;
}

// Lowercased words with ASCII punctuation treated as separators.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char ch : text) {
    if (std::isalnum(ch) || ch >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(ch)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

class Vocabulary {
 public:
  static constexpr const char* kUnk = "<unk>";
  static constexpr const char* kPad = "<pad>";

  Vocabulary() : tokens_{kUnk, kPad} { reindex(); }
  explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.size() < 2 || tokens_[0] != kUnk || tokens_[1] != kPad) {
      throw LoadError("vocabulary must start with <unk> and <pad>");
    }
    reindex();
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(std::size_t id) const { return tokens_.at(id); }

  std::size_t id(const std::string& token) const {
    const auto it = index_.find(token);
    return it == index_.end() ? model::kUnkId : it->second;
  }

  // Tokenizes and truncates to `max_len`; unknown words map to <unk>.
  model::Caption encode(const std::string& text, std::size_t max_len) const {
    model::Caption c;
    c.raw = text;
    for (const auto& t : tokenize(text)) {
      if (c.tokens.size() == max_len) break;
      c.tokens.push_back(id(t));
    }
    if (c.tokens.empty()) throw DomainError("caption has no words");
    return c;
  }

  void save(const std::string& path) const {
    std::string out;
    for (const auto& t : tokens_) out += t + "\n";
    write_file(path, out);
  }

  static Vocabulary load(const std::string& path) {
    std::istringstream in(read_file(path));
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      tokens.push_back(line);
    }
    return Vocabulary(std::move(tokens));
  }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (!index_.emplace(tokens_[i], i).second) throw LoadError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }

  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t> index_;
};

// Ids by descending frequency, ties broken lexicographically.
inline Vocabulary build_vocab(const std::vector<std::string>& captions, std::size_t min_freq = 1) {
  std::map<std::string, std::size_t> freq;
  for (const auto& c : captions)
    for (const auto& t : tokenize(c)) ++freq[t];
  if (freq.empty()) throw DomainError("cannot build a vocabulary from an empty corpus");
  std::vector<std::pair<std::string, std::size_t>> items(freq.begin(), freq.end());
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens{Vocabulary::kUnk, Vocabulary::kPad};
  for (const auto& [t, n] : items)
    if (n >= min_freq && t != Vocabulary::kUnk && t != Vocabulary::kPad) tokens.push_back(t);
  return Vocabulary(std::move(tokens));
}

inline Vocabulary build_vocab(const DatasetManifest& m, std::size_t min_freq = 1) {
  std::vector<std::string> all;
  for (const auto& p : enumerate_pairs(m)) all.push_back(p.caption);
  return build_vocab(all, min_freq);
}

// Largest centered square crop, then bilinear resampling (half-pixel centers).
template <class T>
Image<T> center_crop_resize(const Image<T>& img, std::size_t size) {
  if (img.rank() != 3 || img.dim(0) != 3) throw ShapeError("expected a 3xHxW image");
  if (size == 0) throw DomainError("target size must be positive");
  const std::size_t h = img.dim(1), w = img.dim(2), side = std::min(h, w);
  const std::size_t y0 = (h - side) / 2, x0 = (w - side) / 2;
  const double scale = static_cast<double>(side) / static_cast<double>(size);
  Image<T> out({3, size, size});
  for (std::size_t y = 0; y < size; ++y) {
    const double sy = std::clamp((y + 0.5) * scale - 0.5, 0.0, static_cast<double>(side - 1));
    const std::size_t ya = static_cast<std::size_t>(sy), yb = std::min(ya + 1, side - 1);
    const double fy = sy - static_cast<double>(ya);
    for (std::size_t x = 0; x < size; ++x) {
      const double sx = std::clamp((x + 0.5) * scale - 0.5, 0.0, static_cast<double>(side - 1));
      const std::size_t xa = static_cast<std::size_t>(sx), xb = std::min(xa + 1, side - 1);
      const double fx = sx - static_cast<double>(xa);
      for (std::size_t c = 0; c < 3; ++c) {
        auto at = [&](std::size_t yy, std::size_t xx) { return static_cast<double>(img.at(c, y0 + yy, x0 + xx)); };
        const double top = at(ya, xa) * (1 - fx) + at(ya, xb) * fx;
        const double bottom = at(yb, xa) * (1 - fx) + at(yb, xb) * fx;
        out.at(c, y, x) = static_cast<T>(top * (1 - fy) + bottom * fy);
      }
    }
  }
  return out;
}

template <class T>
Image<T> flip_horizontal(const Image<T>& img) {
  Image<T> out(img.shape());
  const std::size_t h = img.dim(1), w = img.dim(2);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y, w - 1 - x);
  return out;
}

struct PreparedPair {
  Image<float> clean;       // I
  Image<float> compressed;  // I^c
  model::Caption caption;
};

inline PreparedPair prepare_pair(const Image<float>& source, const std::string& caption, const Vocabulary& vocab,
                                 std::size_t image_size, jpeg::QualityFactor qf, std::size_t max_len,
                                 jpeg::Subsampling ss = jpeg::Subsampling::k420) {
  PreparedPair p;
  p.clean = quantize_8bit(center_crop_resize(source, image_size));
  p.compressed = jpeg::degrade(p.clean, qf, ss);
  p.caption = vocab.encode(caption, max_len);
  return p;
}

inline PreparedPair prepare_pair(const DatasetManifest& m, const PairRef& ref, const Vocabulary& vocab,
                                 std::size_t image_size, jpeg::QualityFactor qf, std::size_t max_len) {
  return prepare_pair(read_image<float>(m.entries.at(ref.entry).image_path), ref.caption, vocab, image_size, qf,
                      max_len);
}

// Deterministic per-epoch permutation of [0, n).
inline std::vector<std::size_t> batch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32), 0x5eedu};
  std::mt19937_64 rng(seq);
  // Fisher-Yates with an explicit modulus so the order does not depend on the
  // standard library's distribution implementation.
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  return order;
}

// Seeded horizontal-flip decision for one sample of one epoch.
inline bool flip_decision(std::uint64_t seed, std::uint64_t epoch, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(index), 0xf11bu};
  std::mt19937_64 rng(seq);
  return (rng() & 1u) != 0;
}

}  // namespace tgjar::data
