// Copyright (c) 2026 The TGJAR Authors
// SPDX-License-Identifier: Apache-2.0

// Central-difference gradient oracle. The checked function may return any
// shape; it is reduced to a scalar by a fixed random projection so that ops
// whose outputs sum to a constant (softmax) still get a meaningful check.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "tgjar/core/error.hpp"
#include "tgjar/nn/graph.hpp"
#include "tgjar/nn/ops.hpp"

namespace tgjar::nn {

struct GradCheckOptions {
  double step = 1e-4;
  // Errors are |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double denom_floor = 1e-4;
  // Coordinates sampled per tensor; 0 checks every coordinate.
  std::size_t max_per_tensor = 16;
  // Coordinates where the h and h/2 differences disagree by more than this
  // (relative) straddle a kink (PReLU, abs, clamp) and are skipped.
  double kink_threshold = 1e-3;
  std::uint64_t seed = 1234;
};

struct GradCheckReport {
  double max_rel_error = 0;
  double max_abs_error = 0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
  std::string worst;

  bool passed(double tolerance) const { return checked > 0 && max_rel_error < tolerance; }
};

using GradCheckFn = std::function<Var<double>(Graph<double>&, const std::vector<Var<double>>&)>;

namespace detail {

inline double projected_scalar(const Tensor<double>& out, std::uint64_t seed) {
  if (!out.all_finite()) throw NumericError("grad_check: non-finite output");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  double acc = 0;
  for (double v : out.values()) acc += v * dist(rng);
  return acc;
}

inline Tensor<double> projection(const Shape& shape, std::uint64_t seed) {
  Tensor<double> t(shape);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& v : t.storage()) v = dist(rng);
  return t;
}

}  // namespace detail

// Checks d(fn)/d(inputs) and, when `store` is given, d(fn)/d(store entries
// that are not frozen).
inline GradCheckReport grad_check(const GradCheckFn& fn, std::vector<Tensor<double>> inputs,
                                  ParamStore<double>* store = nullptr, const GradCheckOptions& opt = {}) {
  auto evaluate = [&](bool with_grad, std::vector<Tensor<double>>* input_grads) {
    Graph<double> g(with_grad);
    if (store) g.accumulate_into(*store);
    std::vector<Var<double>> vars;
    for (const auto& t : inputs) vars.push_back(g.leaf(t));
    Var<double> out = fn(g, vars);
    const double s = detail::projected_scalar(out.value(), opt.seed);
    if (with_grad) {
      Var<double> r = g.constant(detail::projection(out.shape(), opt.seed));
      Var<double> root = sum(mul(out, r));
      if (store) store->zero_grad();
      g.backward(root);
      for (const auto& v : vars) input_grads->push_back(g.grad(v));
    }
    return s;
  };

  std::vector<Tensor<double>> input_grads;
  evaluate(true, &input_grads);

  struct Target {
    std::string name;
    Tensor<double>* value;
    Tensor<double> analytic;
  };
  std::vector<Target> targets;
  for (std::size_t i = 0; i < inputs.size(); ++i)
    targets.push_back({"input" + std::to_string(i), &inputs[i], input_grads[i]});
  if (store) {
    for (auto& [name, p] : *store) {
      if (!p.frozen && !p.buffer) targets.push_back({name, &p.value, p.grad});
    }
  }

  GradCheckReport report;
  std::mt19937_64 pick(opt.seed ^ 0x9e3779b97f4a7c15ULL);
  for (auto& t : targets) {
    std::vector<std::size_t> idx(t.value->size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (opt.max_per_tensor && idx.size() > opt.max_per_tensor) {
      std::shuffle(idx.begin(), idx.end(), pick);
      idx.resize(opt.max_per_tensor);
    }
    for (std::size_t i : idx) {
      const double orig = (*t.value)[i];
      auto central = [&](double h) {
        (*t.value)[i] = orig + h;
        const double fp = evaluate(false, nullptr);
        (*t.value)[i] = orig - h;
        const double fm = evaluate(false, nullptr);
        (*t.value)[i] = orig;
        return (fp - fm) / (2 * h);
      };
      const double numeric = central(opt.step);
      const double numeric_half = central(opt.step / 2);
      const double scale = std::max({std::abs(numeric), std::abs(numeric_half), opt.denom_floor});
      if (std::abs(numeric - numeric_half) / scale > opt.kink_threshold) {
        ++report.skipped_kinks;
        continue;
      }
      const double a = t.analytic[i];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), opt.denom_floor});
      ++report.checked;
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst = t.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

}  // namespace tgjar::nn
