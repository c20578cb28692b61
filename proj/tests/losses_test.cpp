// Copyright (c) 2026 The TGJAR Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "test_support.hpp"
#include "tgjar/data/synthetic.hpp"
#include "tgjar/jpeg/codec.hpp"
#include "tgjar/model/losses.hpp"

namespace tgjar::model {
namespace {

using namespace tgjar::testing;

double scalar(const V& v) { return v.value()[0]; }

class Contrastive : public ::testing::Test {
 protected:
  metrics::PerceptualExtractor<double> f;
  Tensor<double> i = data::random_scene(32, 3).image.cast<double>().reshaped({1, 3, 32, 32});
  Tensor<double> ic = jpeg::degrade(data::random_scene(32, 3).image.cast<double>(), jpeg::QualityFactor(5))
                          .reshaped({1, 3, 32, 32});
};

TEST_F(Contrastive, ZeroWhenRestoredEqualsReference) {
  G g(false);
  EXPECT_EQ(scalar(contrastive_loss(g, f, g.constant(i), g.constant(i), g.constant(ic), 0.1)), 0.0);
}

TEST_F(Contrastive, DenominatorCollapsesToC) {
  G g(false);
  const double f_ic_i = scalar(metrics::perceptual_distance(g, f, g.constant(ic), g.constant(i)));
  EXPECT_NEAR(scalar(contrastive_loss(g, f, g.constant(ic), g.constant(i), g.constant(ic), 0.1)), f_ic_i / 0.1,
              1e-12);
}

TEST_F(Contrastive, CleanEndOfBlendScoresLower) {
  G g(false);
  auto blend = [&](double alpha) {
    Tensor<double> t(i.shape());
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = alpha * i[k] + (1 - alpha) * ic[k];
    return scalar(contrastive_loss(g, f, g.constant(t), g.constant(i), g.constant(ic), 0.1));
  };
  EXPECT_LT(blend(1.0), blend(0.0));
  EXPECT_GE(blend(0.5), 0.0);
}

TEST_F(Contrastive, RejectsBadArguments) {
  G g(false);
  EXPECT_THROW(contrastive_loss(g, f, g.constant(i), g.constant(i), g.constant(ic), 0.0), DomainError);
  EXPECT_THROW(contrastive_loss(g, f, g.constant(i), g.constant(randu({1, 3, 16, 16}, 1)), g.constant(ic), 0.1),
               ShapeError);
}

TEST_F(Contrastive, GradientWithRespectToRestored) {
  const auto ref = randu({1, 3, 16, 16}, 1), neg = randu({1, 3, 16, 16}, 2);
  const auto r = nn::grad_check(
      [&](G& g, const Vs& in) { return contrastive_loss(g, f, in[0], g.constant(ref), g.constant(neg), 0.1); },
      {randu({1, 3, 16, 16}, 3)});
  expect_grad_ok(r, kCompositeTol);
}

TEST_F(Contrastive, UnsimplifiedFormVanishesAtReference) {
  G g(false);
  EXPECT_EQ(scalar(contrastive_loss_unsimplified(g, f, g.constant(i), g.constant(i), g.constant(ic))), 0.0);
}

TEST(Reconstruction, IdentityAndOffset) {
  G g(false);
  const auto a = randu({2, 3, 8, 8}, 1, 0.2, 0.8);
  Tensor<double> b = a;
  for (auto& v : b.storage()) v += 0.05;
  EXPECT_EQ(scalar(reconstruction_loss(g.constant(a), g.constant(a))), 0.0);
  EXPECT_NEAR(scalar(reconstruction_loss(g.constant(b), g.constant(a))), 0.05, 1e-12);
}

TEST(Reconstruction, MatchesPerPixelOracle) {
  G g(false);
  const auto a = randu({2, 3, 8, 8}, 1), b = randu({2, 3, 8, 8}, 2);
  double oracle = 0;
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x) {
          const std::size_t k = ((n * 3 + c) * 8 + y) * 8 + x;
          oracle += std::abs(a[k] - b[k]);
        }
  oracle /= 2 * 3 * 8 * 8;
  EXPECT_NEAR(scalar(reconstruction_loss(g.constant(a), g.constant(b))), oracle, 1e-9);
}

TEST(Gan, WorkedValues) {
  const auto half = gan_losses(0.5, 0.5);
  EXPECT_NEAR(half.d_loss, 2 * std::numbers::ln2, 1e-15);
  EXPECT_NEAR(half.g_loss, std::numbers::ln2, 1e-15);
  const auto sep = gan_losses(1 - 1e-6, 1e-6);
  EXPECT_LT(sep.d_loss, 3e-6);
}

TEST(Gan, GeneratorGradientPushesFakeUp) {
  const double h = 1e-6, p = 0.3;
  const double slope = (gan_losses(0.5, p + h).g_loss - gan_losses(0.5, p - h).g_loss) / (2 * h);
  EXPECT_LT(slope, 0.0);
  EXPECT_NEAR(slope, -1 / p, 1e-6);
}

TEST(Gan, BatchFormsMatchScalarForm) {
  G g(false);
  const Tensor<double> real({2, 1}, std::vector<double>{0.7, 0.9}), fake({2, 1}, std::vector<double>{0.2, 0.4});
  const double d = scalar(discriminator_loss(g.constant(real), g.constant(fake)));
  const double gl = scalar(generator_adversarial_loss(g.constant(fake)));
  EXPECT_NEAR(d, (gan_losses(0.7, 0.2).d_loss + gan_losses(0.9, 0.4).d_loss) / 2, 1e-12);
  EXPECT_NEAR(gl, (gan_losses(0.7, 0.2).g_loss + gan_losses(0.9, 0.4).g_loss) / 2, 1e-12);
}

TEST(Total, WorkedValues) {
  const LossWeights w;
  EXPECT_EQ(total_loss(0, 0, 0, 0, w).total, 0.0);
  EXPECT_NEAR(total_loss(1, 1, 1, 1, w).total, 1.0115, 1e-12);
  LossWeights no_c = w;
  no_c.lambda1 = 0;
  EXPECT_NEAR(total_loss(5, 1, 1, 1, no_c).total, 1.0015, 1e-12);
}

TEST(Total, LinearInEachComponent) {
  const LossWeights w;
  const auto base = total_loss(0.3, 0.2, 0.7, 1.1, w);
  EXPECT_NEAR(total_loss(0.6, 0.2, 0.7, 1.1, w).total - base.total, w.lambda1 * 0.3, 1e-12);
  EXPECT_NEAR(total_loss(0.3, 0.2, 0.7, 3.1, w).total - base.total, w.lambda4 * 2.0, 1e-12);
  EXPECT_EQ(base.l_g, 0.7);
}

TEST(Total, NamesNonFiniteComponent) {
  try {
    total_loss(0, 0, std::numeric_limits<double>::quiet_NaN(), 0, {});
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("l_g"), std::string::npos);
  }
  LossWeights bad;
  bad.c = 0;
  EXPECT_THROW(total_loss(0, 0, 0, 0, bad), DomainError);
}

// ---------------------------------------------------------------------------
// DAMSM

struct DamsmBatch {
  std::vector<Tensor<double>> regions, words;
  Tensor<double> globals, sentences;
};

DamsmBatch random_batch(std::size_t b, std::size_t d, std::uint64_t seed) {
  DamsmBatch out;
  for (std::size_t k = 0; k < b; ++k) {
    out.regions.push_back(randn({d, 4}, seed + 10 * k));
    out.words.push_back(randn({d, 2 + k}, seed + 10 * k + 1));
  }
  out.globals = randn({b, d}, seed + 100);
  out.sentences = randn({b, d}, seed + 101);
  return out;
}

DamsmLosses<double> run(G& g, const DamsmBatch& batch, const DamsmConfig& cfg) {
  std::vector<V> r, w;
  for (const auto& t : batch.regions) r.push_back(g.constant(t));
  for (const auto& t : batch.words) w.push_back(g.constant(t));
  return damsm_loss(g, r, g.constant(batch.globals), w, g.constant(batch.sentences), cfg);
}

// Independent loop-based evaluation of the region-word score; cosines use
// the same sqrt(|v|^2 + eps) norms as the implementation.
double oracle_word_score(const Tensor<double>& reg, const Tensor<double>& wd, const DamsmConfig& cfg) {
  const std::size_t d = reg.dim(0), r = reg.dim(1), t = wd.dim(1);
  auto R = [&](std::size_t i, std::size_t j) { return reg[i * r + j]; };
  auto W = [&](std::size_t i, std::size_t j) { return wd[i * t + j]; };
  std::vector<double> a(r * t);
  for (std::size_t j = 0; j < r; ++j) {
    double z = 0;
    for (std::size_t k = 0; k < t; ++k) {
      double s = 0;
      for (std::size_t i = 0; i < d; ++i) s += R(i, j) * W(i, k);
      a[j * t + k] = std::exp(s);
      z += a[j * t + k];
    }
    for (std::size_t k = 0; k < t; ++k) a[j * t + k] /= z;
  }
  double pooled = 0;
  for (std::size_t k = 0; k < t; ++k) {
    std::vector<double> beta(r);
    double z = 0;
    for (std::size_t j = 0; j < r; ++j) z += beta[j] = std::exp(cfg.gamma1 * a[j * t + k]);
    std::vector<double> ctx(d, 0.0);
    for (std::size_t j = 0; j < r; ++j)
      for (std::size_t i = 0; i < d; ++i) ctx[i] += R(i, j) * beta[j] / z;
    double dot = 0, nw = 0, nc = 0;
    for (std::size_t i = 0; i < d; ++i) {
      dot += W(i, k) * ctx[i];
      nw += W(i, k) * W(i, k);
      nc += ctx[i] * ctx[i];
    }
    const double eps = detail::kCosineEps;
    pooled += std::exp(cfg.gamma2 * dot / (std::sqrt(nw + eps) * std::sqrt(nc + eps)));
  }
  return cfg.gamma3 * std::log(pooled);
}

double oracle_ce(const double s[2][2]) {
  double loss = 0;
  for (int k = 0; k < 2; ++k) {
    loss -= s[k][k] - std::log(std::exp(s[k][0]) + std::exp(s[k][1]));  // caption given image
    loss -= s[k][k] - std::log(std::exp(s[0][k]) + std::exp(s[1][k]));  // image given caption
  }
  return loss / 2;
}

TEST(Damsm, SingleItemBatchIsZero) {
  G g(false);
  const auto l = run(g, random_batch(1, 5, 1), {});
  EXPECT_EQ(scalar(l.word), 0.0);
  EXPECT_EQ(scalar(l.sentence), 0.0);
}

TEST(Damsm, NonNegative) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    G g(false);
    const auto l = run(g, random_batch(3, 5, 10 * s), {});
    EXPECT_GE(scalar(l.word), 0.0);
    EXPECT_GE(scalar(l.sentence), 0.0);
  }
}

TEST(Damsm, TwoItemBatchMatchesOracle) {
  const DamsmConfig cfg;
  const DamsmBatch b = random_batch(2, 4, 7);
  G g(false);
  const auto l = run(g, b, cfg);

  double sw[2][2], ss[2][2];
  for (int k = 0; k < 2; ++k)
    for (int i = 0; i < 2; ++i) {
      sw[k][i] = oracle_word_score(b.regions[k], b.words[i], cfg);
      double dot = 0, na = 0, nb = 0;
      for (std::size_t j = 0; j < 4; ++j) {
        dot += b.globals[k * 4 + j] * b.sentences[i * 4 + j];
        na += b.globals[k * 4 + j] * b.globals[k * 4 + j];
        nb += b.sentences[i * 4 + j] * b.sentences[i * 4 + j];
      }
      const double eps = detail::kCosineEps;
      ss[k][i] = cfg.gamma3 * dot / (std::sqrt(na + eps) * std::sqrt(nb + eps));
    }
  EXPECT_NEAR(scalar(l.word), oracle_ce(sw), 1e-9);
  EXPECT_NEAR(scalar(l.sentence), oracle_ce(ss), 1e-9);
}

TEST(Damsm, OrthogonalMatchedPairsApproachZero) {
  DamsmBatch b;
  const std::size_t n = 3, d = 3;
  b.globals = Tensor<double>({n, d});
  for (std::size_t k = 0; k < n; ++k) b.globals[k * d + k] = 1.0;
  b.sentences = b.globals;
  for (std::size_t k = 0; k < n; ++k) {
    Tensor<double> e({d, 1});
    e[k] = 1.0;
    b.regions.push_back(e);
    b.words.push_back(e);
  }
  DamsmConfig cfg;
  double prev = std::numeric_limits<double>::infinity();
  for (double gamma3 : {1.0, 10.0, 50.0}) {
    cfg.gamma3 = gamma3;
    G g(false);
    const auto l = run(g, b, cfg);
    EXPECT_LT(scalar(l.sentence), prev);
    prev = scalar(l.sentence);
    if (gamma3 == 50.0) {
      EXPECT_LT(scalar(l.sentence), 1e-15);
      EXPECT_LT(scalar(l.word), 1e-15);
    }
  }
}

TEST(Damsm, RejectsEmptyOrMismatchedBatch) {
  G g(false);
  EXPECT_THROW(damsm_loss<double>(g, {}, g.constant(randn({1, 4}, 1)), {}, g.constant(randn({1, 4}, 2)), {}),
               DomainError);
  DamsmBatch b = random_batch(2, 4, 1);
  b.words.pop_back();
  EXPECT_THROW(run(g, b, {}), ShapeError);
}

TEST(Damsm, CompositeGradient) {
  const DamsmBatch b = random_batch(2, 4, 3);
  const auto r = nn::grad_check(
      [&](G& g, const Vs& in) {
        const auto l = damsm_loss(g, {in[0], in[1]}, in[2], {in[3], in[4]}, in[5], DamsmConfig{});
        return nn::add(l.word, l.sentence);
      },
      {b.regions[0], b.regions[1], b.globals, b.words[0], b.words[1], b.sentences});
  expect_grad_ok(r, kCompositeTol);
}

}  // namespace
}  // namespace tgjar::model
