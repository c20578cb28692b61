// Copyright (c) 2026 The TGJAR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "tgjar/core/tensor.hpp"

namespace tgjar::metrics {

inline constexpr double kPsnrCap = 100.0;

// 10*log10(1/MSE) for [0,1]-scaled images; +inf for identical inputs.
template <class T>
double psnr(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "psnr");
  double se = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    se += d * d;
  }
  if (se == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(static_cast<double>(a.size()) / se);
}

// PSNR as reported in logs and JSON: identical images map to kPsnrCap.
template <class T>
double psnr_report(const Tensor<T>& a, const Tensor<T>& b) {
  return std::min(psnr(a, b), kPsnrCap);
}

}  // namespace tgjar::metrics
