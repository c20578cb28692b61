// Copyright (c) 2026 The TGJAR Authors
// SPDX-License-Identifier: Apache-2.0

// Reverse-mode tape. Every op records its output value and a closure that
// maps the output gradient onto its parents' gradients. Nodes are visited in
// reverse creation order, which is a valid topological order for a tape.

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tgjar/core/error.hpp"
#include "tgjar/core/tensor.hpp"
#include "tgjar/nn/param_store.hpp"

namespace tgjar::nn {

template <class T>
class Graph;

template <class T>
class Var {
 public:
  Var() = default;
  Var(Graph<T>* g, std::size_t id) : graph_(g), id_(id) {}

  bool valid() const { return graph_ != nullptr; }
  Graph<T>& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  const Tensor<T>& value() const { return graph_->value(*this); }
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t i) const { return value().dim(i); }
  T item() const { return value()[0]; }

 private:
  Graph<T>* graph_ = nullptr;
  std::size_t id_ = 0;
};

template <class T>
class Graph {
 public:
  // `self` is the id of the node being differentiated; grads[i] is null when
  // parent i does not require a gradient.
  using BackwardFn =
      std::function<void(const Graph& g, std::size_t self, const Tensor<T>& grad_out,
                         std::span<Tensor<T>* const> grads)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  // Parameters of `store` that are not frozen become trainable leaves and
  // receive their gradients on backward().
  void accumulate_into(ParamStore<T>& store) { sink_ = &store; }

  Var<T> constant(Tensor<T> value) { return push(std::move(value), false); }
  Var<T> leaf(Tensor<T> value) { return push(std::move(value), grad_enabled_); }

  Var<T> param(const ParamStore<T>& store, const std::string& name) {
    const auto key = std::make_pair(&store, name);
    if (auto it = params_.find(key); it != params_.end()) return Var<T>(this, it->second);
    const Parameter<T>& p = store.at(name);
    const bool trainable = grad_enabled_ && sink_ == &store && !p.frozen;
    Node n;
    n.ref = &p.value;
    n.requires_grad = trainable;
    if (trainable) n.sink = &sink_->at(name);
    nodes_.push_back(std::move(n));
    params_.emplace(key, nodes_.size() - 1);
    return Var<T>(this, nodes_.size() - 1);
  }

  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> parents, BackwardFn fn) {
    return record(std::move(value), std::vector<Var<T>>(parents), std::move(fn));
  }

  Var<T> record(Tensor<T> value, const std::vector<Var<T>>& parents, BackwardFn fn) {
    bool req = false;
    for (const auto& p : parents) {
      if (&p.graph() != this) throw DomainError("variable belongs to a different graph");
      req = req || nodes_[p.id()].requires_grad;
    }
    Var<T> v = push(std::move(value), grad_enabled_ && req);
    if (nodes_[v.id()].requires_grad) {
      Node& n = nodes_[v.id()];
      n.parents.reserve(parents.size());
      for (const auto& p : parents) n.parents.push_back(p.id());
      n.backward = std::move(fn);
    }
    return v;
  }

  const Tensor<T>& value(const Var<T>& v) const { return value(v.id()); }
  const Tensor<T>& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.ref ? *n.ref : n.own;
  }
  bool requires_grad(const Var<T>& v) const { return nodes_[v.id()].requires_grad; }

  // Gradient of the last backward() root w.r.t. v; zeros if v was unreached.
  Tensor<T> grad(const Var<T>& v) const {
    const Node& n = nodes_[v.id()];
    if (n.grad.empty()) return Tensor<T>(value(v).shape());
    return n.grad;
  }

  void backward(const Var<T>& root) {
    if (value(root).size() != 1) {
      throw ShapeError("backward() needs a scalar root, got " + shape_str(value(root).shape()));
    }
    if (!nodes_[root.id()].requires_grad) return;
    for (auto& n : nodes_) n.grad = Tensor<T>();
    nodes_[root.id()].grad = Tensor<T>(value(root).shape(), T(1));
    std::vector<Tensor<T>*> grads;
    for (std::size_t id = root.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (n.grad.empty()) continue;
      if (n.backward) {
        grads.assign(n.parents.size(), nullptr);
        for (std::size_t i = 0; i < n.parents.size(); ++i) {
          Node& p = nodes_[n.parents[i]];
          if (!p.requires_grad) continue;
          if (p.grad.empty()) p.grad = Tensor<T>(value(n.parents[i]).shape());
          grads[i] = &p.grad;
        }
        n.backward(*this, id, n.grad, grads);
      }
      if (n.sink) {
        T* dst = n.sink->grad.data();
        const T* src = n.grad.data();
        for (std::size_t i = 0; i < n.grad.size(); ++i) dst[i] += src[i];
      }
    }
  }

  // Batchnorm running statistics computed during a training-mode forward.
  // Applying them is left to the owner of the parameter store.
  void push_buffer_update(std::string name, Tensor<T> value) {
    buffer_updates_.emplace_back(std::move(name), std::move(value));
  }
  const std::vector<std::pair<std::string, Tensor<T>>>& buffer_updates() const {
    return buffer_updates_;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> own;
    const Tensor<T>* ref = nullptr;
    Tensor<T> grad;
    bool requires_grad = false;
    Parameter<T>* sink = nullptr;
    std::vector<std::size_t> parents;
    BackwardFn backward;
  };

  Var<T> push(Tensor<T> value, bool requires_grad) {
    Node n;
    n.own = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
  }

  bool grad_enabled_;
  ParamStore<T>* sink_ = nullptr;
  std::deque<Node> nodes_;
  std::map<std::pair<const ParamStore<T>*, std::string>, std::size_t> params_;
  std::vector<std::pair<std::string, Tensor<T>>> buffer_updates_;
};

template <class T>
void apply_buffer_updates(const Graph<T>& g, ParamStore<T>& store) {
  for (const auto& [name, value] : g.buffer_updates()) store.at(name).value = value;
}

}  // namespace tgjar::nn
