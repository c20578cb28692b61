// Copyright (c) 2026 The TGJAR Authors
// SPDX-License-Identifier: Apache-2.0

// Reference-based perceptual distance over a frozen, seeded three-stage conv
// pyramid, plus a Frechet distance on its pooled features ("FID-small").

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "tgjar/core/error.hpp"
#include "tgjar/model/config.hpp"
#include "tgjar/nn/checkpoint.hpp"
#include "tgjar/nn/layers.hpp"

namespace tgjar::metrics {

using nn::Graph;
using nn::Var;

inline constexpr double kFeatureNormEps = 1e-10;

template <class T>
class PerceptualExtractor {
 public:
  explicit PerceptualExtractor(const model::PerceptualConfig& cfg = {}) : cfg_(cfg) {
    nn::Rng rng(cfg.seed);
    std::size_t cin = 3;
    for (std::size_t i = 0; i < 3; ++i) {
      nn::declare_conv(store_, stage_name(i) + ".conv", spec(i, cin), rng);
      nn::declare_prelu(store_, stage_name(i) + ".act", cfg.channels[i]);
      cin = cfg.channels[i];
    }
    store_.set_frozen("", true);
  }

  // Replaces the seeded weights with `perceptual.*` tensors from a checkpoint.
  void load_weights(const nn::CheckpointData& ck) {
    for (auto& [name, p] : store_) {
      if (!ck.params.contains(name)) throw LoadError("checkpoint lacks extractor tensor '" + name + "'");
      const Tensor<float>& src = ck.params.value(name);
      if (src.shape() != p.value.shape()) throw ShapeError("extractor tensor '" + name + "' has wrong shape");
      p.value = src.template cast<T>();
    }
  }

  const nn::ParamStore<T>& store() const { return store_; }
  const model::PerceptualConfig& config() const { return cfg_; }

  // Stage outputs for x in [0, 1], shape (N, 3, H, W).
  std::vector<Var<T>> features(Graph<T>& g, const Var<T>& x) const {
    if (x.value().rank() != 4 || x.dim(1) != 3) throw ShapeError("perceptual input must be (N,3,H,W)");
    Var<T> h = nn::add_scalar(nn::scale(x, T(2)), T(-1));
    std::vector<Var<T>> out;
    std::size_t cin = 3;
    for (std::size_t i = 0; i < 3; ++i) {
      h = nn::prelu(g, store_, stage_name(i) + ".act", nn::conv(g, store_, stage_name(i) + ".conv", h, spec(i, cin)));
      out.push_back(h);
      cin = cfg_.channels[i];
    }
    return out;
  }

 private:
  static std::string stage_name(std::size_t i) { return "perceptual.stage" + std::to_string(i); }
  nn::LayerSpec spec(std::size_t i, std::size_t cin) const {
    return nn::conv_spec(cin, cfg_.channels[i], 3, i == 0 ? 1 : 2, 1);
  }

  model::PerceptualConfig cfg_;
  nn::ParamStore<T> store_;
};

// Per-image distances, shape (N): for each stage, unit-normalize channels,
// square the difference, average over channels and space; sum the stages.
template <class T>
Var<T> perceptual_distance(Graph<T>& g, const PerceptualExtractor<T>& f, const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "perceptual_distance");
  const auto fa = f.features(g, a), fb = f.features(g, b);
  const std::size_t n = a.dim(0);
  Var<T> total;
  for (std::size_t s = 0; s < fa.size(); ++s) {
    const Var<T> na = nn::normalize(fa[s], 1, T(kFeatureNormEps));
    const Var<T> nb = nn::normalize(fb[s], 1, T(kFeatureNormEps));
    const Var<T> sq = nn::square(nn::sub(na, nb));
    const std::size_t per = sq.value().size() / n;
    const Var<T> d = nn::scale(nn::sum_axis(nn::reshape(sq, {n, per}), 1), T(1) / static_cast<T>(per));
    total = s == 0 ? d : nn::add(total, d);
  }
  return total;
}

// Convenience form on two single images.
template <class T>
double perceptual_distance(const PerceptualExtractor<T>& f, const Image<T>& a, const Image<T>& b) {
  require_same_shape(a.shape(), b.shape(), "perceptual_distance");
  Graph<T> g(false);
  const Shape s{1, a.dim(0), a.dim(1), a.dim(2)};
  return static_cast<double>(perceptual_distance(g, f, g.constant(a.reshaped(s)), g.constant(b.reshaped(s))).value()[0]);
}

// Concatenated per-stage global-average-pooled features of one image.
template <class T>
Eigen::VectorXd pooled_features(const PerceptualExtractor<T>& f, const Image<T>& img) {
  Graph<T> g(false);
  const auto feats = f.features(g, g.constant(img.reshaped({1, img.dim(0), img.dim(1), img.dim(2)})));
  std::vector<double> v;
  for (const auto& st : feats) {
    const Var<T> p = nn::gap(st);
    for (T x : p.value().values()) v.push_back(static_cast<double>(x));
  }
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline constexpr double kPsdTolerance = 1e-8;

namespace detail {

// Symmetric PSD square root; eigenvalues below -tol raise, the rest clamp at 0.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* what) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw NumericError(std::string("eigendecomposition failed for ") + what);
  Eigen::VectorXd ev = es.eigenvalues();
  const double tol = kPsdTolerance * std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < -tol) throw NumericError(std::string(what) + " is not positive semi-definite");
    ev[i] = std::sqrt(std::max(ev[i], 0.0));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

// ||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2).
inline double frechet_distance(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& s1, const Eigen::VectorXd& mu2,
                               const Eigen::MatrixXd& s2) {
  if (mu1.size() != mu2.size() || s1.rows() != mu1.size() || s2.rows() != mu2.size()) {
    throw ShapeError("frechet_distance: dimension mismatch");
  }
  const Eigen::MatrixXd r1 = detail::psd_sqrt(s1, "covariance");
  const Eigen::MatrixXd cross = detail::psd_sqrt(r1 * s2 * r1, "covariance product");
  const double d = (mu1 - mu2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * cross.trace();
  return std::max(d, 0.0);
}

struct GaussianFit {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // unbiased
};

inline GaussianFit fit_gaussian(const std::vector<Eigen::VectorXd>& xs) {
  if (xs.size() < 2) throw DomainError("need at least 2 samples to fit a covariance");
  const Eigen::Index d = xs.front().size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(xs.size()), d);
  for (std::size_t i = 0; i < xs.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = xs[i].transpose();
  GaussianFit fit;
  fit.mean = m.colwise().mean().transpose();
  const Eigen::MatrixXd c = m.rowwise() - fit.mean.transpose();
  fit.cov = c.transpose() * c / static_cast<double>(xs.size() - 1);
  return fit;
}

template <class T>
double fid_small(const PerceptualExtractor<T>& f, const std::vector<Image<T>>& set_a,
                 const std::vector<Image<T>>& set_b) {
  if (set_a.size() < 2 || set_b.size() < 2) throw DomainError("fid_small needs at least 2 images per set");
  std::vector<Eigen::VectorXd> fa, fb;
  for (const auto& img : set_a) fa.push_back(pooled_features(f, img));
  for (const auto& img : set_b) fb.push_back(pooled_features(f, img));
  const GaussianFit ga = fit_gaussian(fa), gb = fit_gaussian(fb);
  return frechet_distance(ga.mean, ga.cov, gb.mean, gb.cov);
}

}  // namespace tgjar::metrics
