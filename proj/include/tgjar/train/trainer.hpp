// Copyright (c) 2026 The TGJAR Authors
// SPDX-License-Identifier: Apache-2.0

// Two-stage training: DAMSM pretraining of the encoders, then alternating
// discriminator/generator updates with the encoders and the perceptual
// extractor frozen. Every step is a pure function of the checkpointed state,
// so a resumed run continues bit-identically.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tgjar/core/error.hpp"
#include "tgjar/data/dataset.hpp"
#include "tgjar/jpeg/codec.hpp"
#include "tgjar/metrics/perceptual.hpp"
#include "tgjar/metrics/psnr.hpp"
#include "tgjar/model/inference.hpp"
#include "tgjar/model/losses.hpp"
#include "tgjar/model/model.hpp"
#include "tgjar/nn/adam.hpp"
#include "tgjar/nn/checkpoint.hpp"

namespace tgjar::train {

enum class Stage { kDamsm, kAdversarial };

inline std::string stage_name(Stage s) { return s == Stage::kDamsm ? "damsm" : "adv"; }

inline Stage parse_stage(const std::string& s) {
  if (s == "damsm") return Stage::kDamsm;
  if (s == "adv" || s == "adversarial") return Stage::kAdversarial;
  throw DomainError("unknown stage '" + s + "' (expected damsm or adv)");
}

struct TrainConfig {
  Stage stage = Stage::kAdversarial;
  int qf = 5;
  std::size_t batch_size = 4;
  double lr_start = 1e-4;
  double lr_end = 1e-8;
  std::size_t lr_decay_every = 20;  // epochs
  double decay_factor = 0.1;
  std::size_t epochs = 100;
  std::size_t max_steps = 0;  // 0: run all epochs
  std::uint64_t seed = 0;
  bool flip = true;
  model::ModelConfig model = model::ModelConfig::desk();
  model::LossWeights weights;

  void validate() const {
    (void)jpeg::QualityFactor(qf);
    if (batch_size < 1) throw DomainError("batch_size must be >= 1");
    if (!(lr_end > 0) || lr_start < lr_end) throw DomainError("need lr_start >= lr_end > 0");
    if (lr_decay_every < 1) throw DomainError("lr_decay_every must be >= 1");
    if (!(decay_factor > 0 && decay_factor <= 1)) throw DomainError("decay_factor must be in (0, 1]");
    weights.validate();
    model.validate();
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"stage", stage_name(c.stage)},
       {"qf", c.qf},
       {"batch_size", c.batch_size},
       {"lr_start", c.lr_start},
       {"lr_end", c.lr_end},
       {"lr_decay_every", c.lr_decay_every},
       {"decay_factor", c.decay_factor},
       {"epochs", c.epochs},
       {"max_steps", c.max_steps},
       {"seed", c.seed},
       {"flip", c.flip},
       {"model", c.model},
       {"weights",
        {{"lambda1", c.weights.lambda1},
         {"lambda2", c.weights.lambda2},
         {"lambda3", c.weights.lambda3},
         {"lambda4", c.weights.lambda4},
         {"c", c.weights.c}}}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  c.stage = parse_stage(j.value("stage", std::string("adv")));
  c.qf = j.value("qf", c.qf);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr_start = j.value("lr_start", c.lr_start);
  c.lr_end = j.value("lr_end", c.lr_end);
  c.lr_decay_every = j.value("lr_decay_every", c.lr_decay_every);
  c.decay_factor = j.value("decay_factor", c.decay_factor);
  c.epochs = j.value("epochs", c.epochs);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.seed = j.value("seed", c.seed);
  c.flip = j.value("flip", c.flip);
  if (j.contains("model")) c.model = j.at("model").get<model::ModelConfig>();
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    c.weights.lambda1 = w.value("lambda1", c.weights.lambda1);
    c.weights.lambda2 = w.value("lambda2", c.weights.lambda2);
    c.weights.lambda3 = w.value("lambda3", c.weights.lambda3);
    c.weights.lambda4 = w.value("lambda4", c.weights.lambda4);
    c.weights.c = w.value("c", c.weights.c);
  }
}

// Decade decay: lr_start * factor^floor(epoch / every), floored at lr_end.
inline double learning_rate(const TrainConfig& c, std::size_t epoch) {
  const double lr = c.lr_start * std::pow(c.decay_factor, static_cast<double>(epoch / c.lr_decay_every));
  return std::max(lr, c.lr_end);
}

// Clean images (already cropped and resized) with their tokenized captions.
struct TrainingSet {
  data::Vocabulary vocab;
  std::vector<Image<float>> images;
  std::vector<model::Caption> captions;

  std::size_t size() const { return images.size(); }
};

inline TrainingSet make_training_set(const data::DatasetManifest& m, const data::Vocabulary& vocab,
                                     std::size_t image_size, std::size_t max_len) {
  TrainingSet s;
  s.vocab = vocab;
  std::vector<Image<float>> sources;
  for (const auto& e : m.entries) sources.push_back(data::read_image<float>(e.image_path));
  for (const auto& p : data::enumerate_pairs(m)) {
    s.images.push_back(data::quantize_8bit(data::center_crop_resize(sources[p.entry], image_size)));
    s.captions.push_back(vocab.encode(p.caption, max_len));
  }
  if (s.images.empty()) throw DomainError("empty dataset");
  return s;
}

struct Batch {
  nn::Var<float> clean, compressed;  // (B, 3, S, S)
  std::vector<model::Caption> captions;
};

class Trainer {
 public:
  using Params = nn::ParamStore<float>;

  Trainer(TrainConfig cfg, TrainingSet data, Params params)
      : cfg_(std::move(cfg)), data_(std::move(data)), params_(std::move(params)), perceptual_(cfg_.model.perceptual) {
    cfg_.model.text.vocab_size = data_.vocab.size();
    cfg_.validate();
    if (data_.size() == 0) throw DomainError("empty dataset");
    for (const auto& img : data_.images) {
      if (img.dim(1) != cfg_.model.image_size || img.dim(2) != cfg_.model.image_size) {
        throw ShapeError("training images must be " + std::to_string(cfg_.model.image_size) + " pixels square");
      }
    }
    apply_stage_freezing();
  }

  // Fresh parameters from the configured seed.
  static Trainer create(TrainConfig cfg, TrainingSet data) {
    cfg.model.text.vocab_size = data.vocab.size();
    Params params = model::build_model<float>(cfg.model, cfg.seed);
    return Trainer(std::move(cfg), std::move(data), std::move(params));
  }

  // Resumes from a checkpoint written by `checkpoint()`; the training
  // configuration is taken from the checkpoint.
  static Trainer resume(const nn::CheckpointData& ck, TrainingSet data) {
    if (!ck.meta.contains("train_config")) throw LoadError("checkpoint has no training state");
    TrainConfig cfg = ck.meta.at("train_config").get<TrainConfig>();
    const auto vocab = ck.meta.at("vocab").get<std::vector<std::string>>();
    if (vocab != data.vocab.tokens()) throw ConfigMismatchError("dataset vocabulary differs from the checkpoint's");
    Params params;
    nn::CheckpointData perceptual;
    for (const auto& [name, p] : ck.params) {
      if (name.starts_with("perceptual.")) {
        perceptual.params.add(name, p.value, p.buffer);
      } else {
        auto& q = params.add(name, p.value, p.buffer);
        q.frozen = p.frozen;
      }
    }
    Trainer t(std::move(cfg), std::move(data), std::move(params));
    if (perceptual.params.size() > 0) t.perceptual_.load_weights(perceptual);
    t.step_ = ck.meta.at("step").get<std::size_t>();
    t.load_adam(ck, "encoders", t.adam_enc_);
    t.load_adam(ck, "generator", t.adam_gen_);
    t.load_adam(ck, "discriminator", t.adam_disc_);
    return t;
  }

  const TrainConfig& config() const { return cfg_; }
  const Params& params() const { return params_; }
  Params& mutable_params() { return params_; }
  const metrics::PerceptualExtractor<float>& perceptual() const { return perceptual_; }
  const TrainingSet& data() const { return data_; }
  std::size_t step_count() const { return step_; }

  std::size_t steps_per_epoch() const { return (data_.size() + cfg_.batch_size - 1) / cfg_.batch_size; }
  std::size_t total_steps() const {
    const std::size_t all = cfg_.epochs * steps_per_epoch();
    return cfg_.max_steps ? std::min(all, cfg_.max_steps) : all;
  }
  bool finished() const { return step_ >= total_steps(); }

  // Runs one batch and returns its log record.
  nlohmann::json step() {
    const std::size_t epoch = step_ / steps_per_epoch();
    const double lr = learning_rate(cfg_, epoch);
    nn::Graph<float> g(true);
    g.accumulate_into(params_);
    const Batch batch = make_batch(g, step_);
    nlohmann::json rec;
    try {
      rec = cfg_.stage == Stage::kDamsm ? damsm_step(g, batch, lr) : adversarial_step(g, batch, lr);
    } catch (const NumericError& e) {
      throw NumericError("step " + std::to_string(step_) + ": " + e.what());
    }
    rec["step"] = step_;
    rec["epoch"] = epoch;
    rec["lr"] = lr;
    rec["stage"] = stage_name(cfg_.stage);
    ++step_;
    return rec;
  }

  // Steps until finished (or `until` steps total), writing one JSON line per
  // step to `log` when given.
  void run(std::ostream* log, std::size_t until = 0,
           const std::function<void(const nlohmann::json&)>& on_step = nullptr) {
    const std::size_t end = until ? std::min(until, total_steps()) : total_steps();
    while (step_ < end) {
      const auto rec = step();
      if (log) *log << rec.dump() << '\n' << std::flush;
      if (on_step) on_step(rec);
    }
  }

  nn::CheckpointData checkpoint() const {
    nn::CheckpointData ck;
    model::ModelConfig mc = cfg_.model;
    ck.meta = {{"format", "tgjar"},
               {"model_config", mc},
               {"config_hash", model::config_hash(mc)},
               {"train_config", cfg_},
               {"step", step_},
               {"epoch", step_ / steps_per_epoch()},
               {"seed", cfg_.seed},
               {"vocab", data_.vocab.tokens()},
               {"adam", {{"encoders", adam_enc_.step}, {"generator", adam_gen_.step}, {"discriminator", adam_disc_.step}}}};
    ck.params = params_;
    for (const auto& [name, p] : perceptual_.store()) {
      auto& q = ck.params.add(name, p.value, p.buffer);
      q.frozen = true;
    }
    save_adam(ck, "encoders", adam_enc_);
    save_adam(ck, "generator", adam_gen_);
    save_adam(ck, "discriminator", adam_disc_);
    return ck;
  }

  // Builds batch `step` in eval form (no flips) or training form.
  Batch make_batch(nn::Graph<float>& g, std::size_t step) const {
    const std::size_t spe = steps_per_epoch(), epoch = step / spe, b = step % spe;
    const auto order = data::batch_order(data_.size(), cfg_.seed, epoch);
    const std::size_t begin = b * cfg_.batch_size, end = std::min(begin + cfg_.batch_size, data_.size());
    const std::size_t s = cfg_.model.image_size, n = end - begin, plane = 3 * s * s;
    Tensor<float> clean({n, 3, s, s}), comp({n, 3, s, s});
    Batch out;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t idx = order[begin + k];
      Image<float> img = data_.images[idx];
      if (cfg_.flip && data::flip_decision(cfg_.seed, epoch, idx)) img = data::flip_horizontal(img);
      const Image<float> c = jpeg::degrade(img, jpeg::QualityFactor(cfg_.qf));
      std::copy(img.values().begin(), img.values().end(), clean.data() + k * plane);
      std::copy(c.values().begin(), c.values().end(), comp.data() + k * plane);
      out.captions.push_back(data_.captions[idx]);
    }
    out.clean = g.constant(std::move(clean));
    out.compressed = g.constant(std::move(comp));
    return out;
  }

 private:
  static constexpr const char* kEncoderPrefixes[] = {"text_encoder.", "image_encoder."};

  void apply_stage_freezing() {
    const bool damsm = cfg_.stage == Stage::kDamsm;
    for (const char* p : kEncoderPrefixes) params_.set_frozen(p, !damsm);
    params_.set_frozen("generator.", damsm);
    params_.set_frozen("discriminator.", damsm);
  }

  nlohmann::json damsm_step(nn::Graph<float>& g, const Batch& batch, double lr) {
    const auto& mc = cfg_.model;
    const auto text = model::encode_captions(g, params_, mc.text, batch.captions);
    const auto img = model::encode_image(g, params_, mc.image_encoder, batch.clean);
    std::vector<nn::Var<float>> regions;
    for (std::size_t k = 0; k < batch.captions.size(); ++k) regions.push_back(model::image_features_at(img, k).first);
    const auto l = model::damsm_loss(g, regions, img.global, text.words, text.sentences, mc.damsm);
    const nn::Var<float> total = nn::add(l.word, l.sentence);
    const double lw = l.word.value()[0], ls = l.sentence.value()[0];
    if (!std::isfinite(lw)) throw NumericError("loss component l_word is not finite");
    if (!std::isfinite(ls)) throw NumericError("loss component l_sentence is not finite");
    params_.zero_grad();
    g.backward(total);
    nn::adam_step(params_, adam_enc_, lr);
    return {{"l_word", lw}, {"l_sentence", ls}, {"l_it", lw + ls}};
  }

  nlohmann::json adversarial_step(nn::Graph<float>& g, const Batch& batch, double lr) {
    const auto& mc = cfg_.model;
    const nn::BatchNormOptions bn{true, mc.bn_momentum, mc.bn_eps};
    const auto text = model::encode_captions(g, params_, mc.text, batch.captions);
    const auto gen = model::generate(g, params_, mc.generator, batch.compressed, text.words, text.sentences);

    // Discriminator update on a detached copy of the restored batch.
    double d_loss = 0, d_real_mean = 0, d_fake_mean = 0;
    {
      nn::Graph<float> gd(true);
      gd.accumulate_into(params_);
      const auto real = model::discriminate(gd, params_, mc.discriminator, gd.constant(batch.clean.value()), bn);
      const auto fake = model::discriminate(gd, params_, mc.discriminator, gd.constant(gen.image.value()), bn);
      const auto loss = model::discriminator_loss(real, fake);
      d_loss = loss.value()[0];
      if (!std::isfinite(d_loss)) throw NumericError("loss component d_loss is not finite");
      d_real_mean = mean_of(real.value());
      d_fake_mean = mean_of(fake.value());
      params_.zero_grad();
      gd.backward(loss);
      nn::adam_step(params_, adam_disc_, lr, {}, "discriminator.");
      nn::apply_buffer_updates(gd, params_);
    }

    // Generator update against the refreshed discriminator.
    const auto d_fake = model::discriminate(g, params_, mc.discriminator, gen.image, bn);
    const auto l_c = model::contrastive_loss(g, perceptual_, gen.image, batch.clean, batch.compressed, cfg_.weights.c);
    const auto l_r = model::reconstruction_loss(gen.image, batch.clean);
    const auto l_g = model::generator_adversarial_loss(d_fake);
    const auto img = model::encode_image(g, params_, mc.image_encoder, gen.image);
    std::vector<nn::Var<float>> regions;
    for (std::size_t k = 0; k < batch.captions.size(); ++k) regions.push_back(model::image_features_at(img, k).first);
    const auto it = model::damsm_loss(g, regions, img.global, text.words, text.sentences, mc.damsm);
    const auto l_it = nn::add(it.word, it.sentence);

    const auto& w = cfg_.weights;
    const model::LossReport report = model::total_loss(l_c.value()[0], l_r.value()[0], l_g.value()[0],
                                                       l_it.value()[0], w);
    const nn::Var<float> total =
        nn::add(nn::add(nn::scale(l_c, static_cast<float>(w.lambda1)), nn::scale(l_r, static_cast<float>(w.lambda2))),
                nn::add(nn::scale(l_g, static_cast<float>(w.lambda3)), nn::scale(l_it, static_cast<float>(w.lambda4))));
    params_.zero_grad();
    g.backward(total);
    nn::adam_step(params_, adam_gen_, lr, {}, "generator.");

    return {{"l_c", report.l_c},   {"l_r", report.l_r},      {"l_g", report.l_g},
            {"l_it", report.l_it}, {"total", report.total},  {"d_loss", d_loss},
            {"d_real", d_real_mean}, {"d_fake", d_fake_mean}};
  }

  static double mean_of(const Tensor<float>& t) {
    double s = 0;
    for (float v : t.values()) s += v;
    return s / static_cast<double>(t.size());
  }

  static void save_adam(nn::CheckpointData& ck, const std::string& group, const nn::AdamState<float>& st) {
    for (const auto& [name, t] : st.m) ck.state.emplace("adam." + group + ".m." + name, t);
    for (const auto& [name, t] : st.v) ck.state.emplace("adam." + group + ".v." + name, t);
  }

  static void load_adam(const nn::CheckpointData& ck, const std::string& group, nn::AdamState<float>& st) {
    st = {};
    st.step = ck.meta.at("adam").at(group).get<std::int64_t>();
    const std::string m = "adam." + group + ".m.", v = "adam." + group + ".v.";
    for (const auto& [name, t] : ck.state) {
      if (name.starts_with(m)) st.m.emplace(name.substr(m.size()), t);
      if (name.starts_with(v)) st.v.emplace(name.substr(v.size()), t);
    }
  }

  TrainConfig cfg_;
  TrainingSet data_;
  Params params_;
  metrics::PerceptualExtractor<float> perceptual_;
  nn::AdamState<float> adam_enc_, adam_gen_, adam_disc_;
  std::size_t step_ = 0;
};

// Stage 1 from scratch.
inline nn::CheckpointData pretrain_damsm(TrainConfig cfg, TrainingSet data, std::ostream* log = nullptr) {
  cfg.stage = Stage::kDamsm;
  Trainer t = Trainer::create(std::move(cfg), std::move(data));
  t.run(log);
  return t.checkpoint();
}

// Fresh generator/discriminator plus the encoders of a stage-1 checkpoint.
inline Trainer adversarial_trainer(TrainConfig cfg, TrainingSet data, const nn::CheckpointData& encoders) {
  cfg.stage = Stage::kAdversarial;
  const auto vocab = encoders.meta.at("vocab").get<std::vector<std::string>>();
  if (vocab != data.vocab.tokens()) throw ConfigMismatchError("dataset vocabulary differs from the encoder checkpoint");
  cfg.model.text.vocab_size = data.vocab.size();
  const model::ModelConfig enc_cfg = model::checkpoint_config(encoders);
  if (enc_cfg.text.dim != cfg.model.text.dim || enc_cfg.text.embed_dim != cfg.model.text.embed_dim ||
      enc_cfg.image_encoder.channels != cfg.model.image_encoder.channels) {
    throw ConfigMismatchError("encoder checkpoint layout differs from the requested model config");
  }
  nn::ParamStore<float> params = model::build_model<float>(cfg.model, cfg.seed);
  for (const char* prefix : {"text_encoder.", "image_encoder."}) params.merge_from(encoders.params, prefix);
  return Trainer(std::move(cfg), std::move(data), std::move(params));
}

inline nn::CheckpointData train_adversarial(TrainConfig cfg, TrainingSet data, const nn::CheckpointData& encoders,
                                            std::ostream* log = nullptr) {
  Trainer t = adversarial_trainer(std::move(cfg), std::move(data), encoders);
  t.run(log);
  return t.checkpoint();
}

// Mean probability of the matched caption under the sentence-level batch
// softmax, over consecutive batches of `batch_size` training pairs.
inline double damsm_match_probability(const nn::ParamStore<float>& params, const model::ModelConfig& mc,
                                      const TrainingSet& data, std::size_t batch_size) {
  double total = 0;
  std::size_t count = 0;
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    const std::size_t end = std::min(begin + batch_size, data.size()), n = end - begin, s = mc.image_size;
    nn::Graph<float> g(false);
    Tensor<float> imgs({n, 3, s, s});
    std::vector<model::Caption> caps;
    for (std::size_t k = 0; k < n; ++k) {
      std::copy(data.images[begin + k].values().begin(), data.images[begin + k].values().end(),
                imgs.data() + k * 3 * s * s);
      caps.push_back(data.captions[begin + k]);
    }
    const auto img = model::encode_image(g, params, mc.image_encoder, g.constant(std::move(imgs)));
    const auto txt = model::encode_captions(g, params, mc.text, caps);
    const auto sim = nn::scale(nn::matmul(nn::normalize(img.global, 1, 1e-8f),
                                          nn::transpose(nn::normalize(txt.sentences, 1, 1e-8f))),
                               static_cast<float>(mc.damsm.gamma3));
    const auto p = nn::softmax(sim, 1).value();
    for (std::size_t k = 0; k < n; ++k) total += p[k * n + k];
    count += n;
  }
  return total / static_cast<double>(count);
}

// Mean PSNR / perceptual distance and FID-small of compressed and deblocked
// images against the clean ones.
inline nlohmann::json evaluate(const model::LoadedModel& m, const TrainingSet& data, jpeg::QualityFactor qf) {
  const metrics::PerceptualExtractor<float> perceptual = model::perceptual_for(m);
  double psnr_c = 0, psnr_d = 0, perc_c = 0, perc_d = 0;
  std::vector<Image<float>> clean, comp, restored;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Image<float>& img = data.images[i];
    Image<float> c = jpeg::degrade(img, qf);
    Image<float> d = model::deblock(m, c, data.captions[i]).image;
    psnr_c += metrics::psnr_report(img, c);
    psnr_d += metrics::psnr_report(img, d);
    perc_c += metrics::perceptual_distance(perceptual, img, c);
    perc_d += metrics::perceptual_distance(perceptual, img, d);
    clean.push_back(img);
    comp.push_back(std::move(c));
    restored.push_back(std::move(d));
  }
  const double n = static_cast<double>(data.size());
  nlohmann::json out = {{"n", data.size()},
                        {"qf", qf.value()},
                        {"config_hash", m.config_hash},
                        {"compressed", {{"psnr", psnr_c / n}, {"perceptual", perc_c / n}}},
                        {"deblocked", {{"psnr", psnr_d / n}, {"perceptual", perc_d / n}}}};
  if (data.size() >= 2) {
    out["compressed"]["fid_small"] = metrics::fid_small(perceptual, clean, comp);
    out["deblocked"]["fid_small"] = metrics::fid_small(perceptual, clean, restored);
  } else {
    out["compressed"]["fid_small"] = nullptr;
    out["deblocked"]["fid_small"] = nullptr;
  }
  return out;
}

}  // namespace tgjar::train
