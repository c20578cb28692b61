// Copyright (c) 2026 The TGJAR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>

#include "tgjar/core/error.hpp"
#include "tgjar/core/tensor.hpp"

namespace tgjar::nn {

template <class T>
struct Parameter {
  Tensor<T> value;
  Tensor<T> grad;
  bool frozen = false;
  // Non-trainable state (batchnorm running statistics).
  bool buffer = false;
};

// Named trainable tensors. Names are dotted paths such as
// "generator.enc0.weight"; iteration order is lexicographic.
template <class T>
class ParamStore {
 public:
  using Map = std::map<std::string, Parameter<T>, std::less<>>;

  Parameter<T>& add(const std::string& name, Tensor<T> value, bool buffer = false) {
    if (entries_.count(name)) throw DomainError("duplicate parameter '" + name + "'");
    Parameter<T> p;
    p.grad = Tensor<T>(value.shape());
    p.value = std::move(value);
    p.buffer = buffer;
    p.frozen = buffer;
    return entries_.emplace(name, std::move(p)).first->second;
  }

  bool contains(std::string_view name) const { return entries_.find(name) != entries_.end(); }

  Parameter<T>& at(std::string_view name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw DomainError("unknown parameter '" + std::string(name) + "'");
    return it->second;
  }
  const Parameter<T>& at(std::string_view name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw DomainError("unknown parameter '" + std::string(name) + "'");
    return it->second;
  }
  const Tensor<T>& value(std::string_view name) const { return at(name).value; }

  void set_frozen(std::string_view prefix, bool frozen) {
    for (auto& [name, p] : entries_) {
      if (!p.buffer && name.starts_with(prefix)) p.frozen = frozen;
    }
  }

  void zero_grad() {
    for (auto& [name, p] : entries_) p.grad.fill(T(0));
  }

  // Scalar count of non-buffer parameters under `prefix`.
  std::size_t count_parameters(std::string_view prefix = {}) const {
    std::size_t n = 0;
    for (const auto& [name, p] : entries_) {
      if (!p.buffer && name.starts_with(prefix)) n += p.value.size();
    }
    return n;
  }

  // Copies every entry under `prefix` from `other`, replacing existing ones.
  void merge_from(const ParamStore& other, std::string_view prefix = {}) {
    for (const auto& [name, p] : other.entries_) {
      if (name.starts_with(prefix)) entries_[name] = p;
    }
  }

  template <class U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& [name, p] : entries_) {
      auto& q = out.add(name, p.value.template cast<U>(), p.buffer);
      q.frozen = p.frozen;
    }
    return out;
  }

  std::size_t size() const { return entries_.size(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  Map entries_;
};

}  // namespace tgjar::nn
