// Copyright (c) 2026 The TGJAR Authors
// SPDX-License-Identifier: Apache-2.0

// Checkpoint container, version 1:
//
//   bytes 0..7    magic "TGJARCKP"
//   bytes 8..11   format version, uint32 little-endian
//   bytes 12..19  header length L, uint64 little-endian
//   next L bytes  UTF-8 JSON header
//   remainder     float32 little-endian payload
//
// Header: {"meta": {...}, "tensors": [{"name", "kind", "shape", "frozen",
// "buffer", "offset"}]}; "offset" counts floats from the start of the
// payload. kind is "param" for ParamStore entries and "state" for auxiliary
// tensors (optimizer moments).

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <map>
#include <string>

#include "json.hpp"
#include "tgjar/core/digest.hpp"
#include "tgjar/core/error.hpp"
#include "tgjar/core/tensor.hpp"
#include "tgjar/nn/param_store.hpp"

namespace tgjar::nn {

inline constexpr char kCheckpointMagic[8] = {'T', 'G', 'J', 'A', 'R', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointData {
  nlohmann::json meta = nlohmann::json::object();
  ParamStore<float> params;
  std::map<std::string, Tensor<float>> state;
};

namespace detail {

template <class U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <class U>
U get_le(const std::string& in, std::size_t pos) {
  if (pos + sizeof(U) > in.size()) throw LoadError("checkpoint truncated");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

inline void put_floats(std::string& out, const Tensor<float>& t) {
  for (float f : t.values()) put_le(out, std::bit_cast<std::uint32_t>(f));
}

}  // namespace detail

inline std::string serialize_checkpoint(const CheckpointData& ck) {
  nlohmann::json tensors = nlohmann::json::array();
  std::string payload;
  std::size_t offset = 0;
  auto add = [&](const std::string& name, const char* kind, const Tensor<float>& t, bool frozen, bool buffer) {
    tensors.push_back({{"name", name}, {"kind", kind}, {"shape", t.shape()}, {"frozen", frozen},
                       {"buffer", buffer}, {"offset", offset}});
    detail::put_floats(payload, t);
    offset += t.size();
  };
  for (const auto& [name, p] : ck.params) add(name, "param", p.value, p.frozen, p.buffer);
  for (const auto& [name, t] : ck.state) add(name, "state", t, false, false);
  const std::string header = nlohmann::json{{"meta", ck.meta}, {"tensors", tensors}}.dump();

  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint64_t>(out, header.size());
  out += header;
  out += payload;
  return out;
}

inline CheckpointData deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
    throw LoadError("not a checkpoint file (bad magic)");
  }
  const auto version = detail::get_le<std::uint32_t>(bytes, 8);
  if (version != kCheckpointVersion) throw LoadError("unsupported checkpoint version " + std::to_string(version));
  const auto header_len = detail::get_le<std::uint64_t>(bytes, 12);
  if (20 + header_len > bytes.size()) throw LoadError("checkpoint header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(20, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  const std::size_t payload = 20 + header_len;
  CheckpointData ck;
  ck.meta = header.value("meta", nlohmann::json::object());
  for (const auto& t : header.at("tensors")) {
    const Shape shape = t.at("shape").get<Shape>();
    const std::size_t n = shape_numel(shape);
    const std::size_t off = t.at("offset").get<std::size_t>();
    if (payload + 4 * (off + n) > bytes.size()) throw LoadError("checkpoint payload truncated");
    std::vector<float> data(n);
    for (std::size_t i = 0; i < n; ++i)
      data[i] = std::bit_cast<float>(detail::get_le<std::uint32_t>(bytes, payload + 4 * (off + i)));
    Tensor<float> tensor(shape, std::move(data));
    const std::string name = t.at("name");
    if (t.at("kind") == "param") {
      auto& p = ck.params.add(name, std::move(tensor), t.value("buffer", false));
      p.frozen = t.value("frozen", false);
    } else {
      ck.state.emplace(name, std::move(tensor));
    }
  }
  return ck;
}

inline void save_checkpoint(const std::string& path, const CheckpointData& ck) {
  write_file(path, serialize_checkpoint(ck));
}

inline CheckpointData load_checkpoint(const std::string& path) { return deserialize_checkpoint(read_file(path)); }

}  // namespace tgjar::nn
