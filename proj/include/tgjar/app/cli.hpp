// Copyright (c) 2026 The TGJAR Authors
// SPDX-License-Identifier: Apache-2.0

// `tgjar` command line: degrade, train, deblock, eval and serve.
// Exit status 0 on success, 1 on usage errors, 2 on runtime errors.

#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tgjar/app/service.hpp"
#include "tgjar/data/dataset.hpp"
#include "tgjar/data/image_io.hpp"
#include "tgjar/train/trainer.hpp"

namespace tgjar::app {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;
inline constexpr const char* kPortEnv = "TGJAR_PORT";

namespace cli_detail {

struct DegradeArgs {
  int qf = 0;
  std::string subsampling = "420";
  std::string in, out;
};

struct TrainArgs {
  std::string data, out, config, preset = "desk", stage = "adv", encoders, resume, log;
  std::optional<int> qf;
  std::optional<std::size_t> batch_size, epochs, max_steps, lr_decay_every, checkpoint_every;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr;
  bool no_flip = false;
};

struct DeblockArgs {
  std::string checkpoint, in, caption, out, attention_dir;
  std::optional<int> qf;
};

struct EvalArgs {
  std::string checkpoint, data, preset, config, out;
  int qf = 5;
};

struct ServeArgs {
  std::string checkpoint, host = "127.0.0.1";
  int port = 8080;
};

inline model::ModelConfig model_config_from(const std::string& preset, const std::string& config_path) {
  if (!config_path.empty()) {
    const auto j = nlohmann::json::parse(read_file(config_path));
    return (j.contains("model") ? j.at("model") : j).get<model::ModelConfig>();
  }
  return model::preset(preset);
}

inline data::Vocabulary dataset_vocab(const data::DatasetManifest& m) {
  return m.vocab_path.empty() ? data::build_vocab(m) : data::Vocabulary::load(m.vocab_path);
}

inline int run_degrade(const DegradeArgs& a, std::ostream& out) {
  const Image<float> img = data::read_image<float>(a.in);
  const Image<float> c = model::degrade_any_size(img, jpeg::QualityFactor(a.qf), jpeg::parse_subsampling(a.subsampling));
  data::write_png(a.out, c);
  out << nlohmann::json{{"out", a.out}, {"qf", a.qf}, {"psnr", metrics::psnr_report(data::quantize_8bit(img), c)}}.dump()
      << '\n';
  return kExitOk;
}

inline int run_train(const TrainArgs& a, std::ostream& out) {
  train::TrainConfig cfg;
  if (!a.config.empty()) cfg = nlohmann::json::parse(read_file(a.config)).get<train::TrainConfig>();
  else cfg.model = model::preset(a.preset);
  cfg.stage = train::parse_stage(a.stage);
  if (a.qf) cfg.qf = *a.qf;
  if (a.batch_size) cfg.batch_size = *a.batch_size;
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.max_steps) cfg.max_steps = *a.max_steps;
  if (a.lr_decay_every) cfg.lr_decay_every = *a.lr_decay_every;
  if (a.seed) cfg.seed = *a.seed;
  if (a.lr) cfg.lr_start = *a.lr;
  if (a.no_flip) cfg.flip = false;

  const data::DatasetManifest manifest = data::load_dataset(a.data);
  std::optional<nn::CheckpointData> source;
  data::Vocabulary vocab;
  if (!a.resume.empty()) {
    source = nn::load_checkpoint(a.resume);
    // Only the stopping point may change on resume.
    if (a.max_steps) source->meta["train_config"]["max_steps"] = *a.max_steps;
    if (a.epochs) source->meta["train_config"]["epochs"] = *a.epochs;
    vocab = data::Vocabulary(source->meta.at("vocab").get<std::vector<std::string>>());
    cfg = source->meta.at("train_config").get<train::TrainConfig>();
  } else if (cfg.stage == train::Stage::kAdversarial && !a.encoders.empty()) {
    source = nn::load_checkpoint(a.encoders);
    vocab = data::Vocabulary(source->meta.at("vocab").get<std::vector<std::string>>());
  } else {
    vocab = dataset_vocab(manifest);
  }
  train::TrainingSet set = train::make_training_set(manifest, vocab, cfg.model.image_size, cfg.model.text.max_len);

  train::Trainer trainer = [&] {
    if (!a.resume.empty()) return train::Trainer::resume(*source, std::move(set));
    if (source) return train::adversarial_trainer(cfg, std::move(set), *source);
    return train::Trainer::create(cfg, std::move(set));
  }();

  std::ofstream log_file;
  if (!a.log.empty()) {
    log_file.open(a.log, std::ios::app);
    if (!log_file) throw LoadError("cannot open log file " + a.log);
  }
  std::ostream& log = a.log.empty() ? out : log_file;
  const std::size_t every = a.checkpoint_every.value_or(0);
  trainer.run(&log, 0, [&](const nlohmann::json& rec) {
    const std::size_t done = rec.at("step").get<std::size_t>() + 1;
    if (every && done % every == 0) nn::save_checkpoint(a.out, trainer.checkpoint());
  });
  nn::save_checkpoint(a.out, trainer.checkpoint());
  out << nlohmann::json{{"checkpoint", a.out}, {"steps", trainer.step_count()}, {"stage", train::stage_name(trainer.config().stage)}}.dump()
      << '\n';
  return kExitOk;
}

inline int run_deblock(const DeblockArgs& a, std::ostream& out) {
  const model::LoadedModel m = model::load_model_file(a.checkpoint);
  Image<float> img = data::quantize_8bit(data::read_image<float>(a.in));
  if (a.qf) img = model::degrade_any_size(img, jpeg::QualityFactor(*a.qf));
  const model::Caption caption = m.vocab.encode(a.caption, m.config.text.max_len);
  const model::DeblockResult r = model::deblock(m, img, caption, !a.attention_dir.empty());
  data::write_png(a.out, r.image);
  if (!a.attention_dir.empty()) {
    std::filesystem::create_directories(a.attention_dir);
    for (std::size_t s = 0; s < r.attention.size(); ++s) {
      const auto& st = r.attention[s];
      const std::size_t hw = st.height * st.width;
      for (std::size_t t = 0; t < st.maps.dim(0); ++t) {
        Tensor<float> map({st.height, st.width});
        float peak = 0;
        for (std::size_t i = 0; i < hw; ++i) peak = std::max(peak, st.maps[t * hw + i]);
        for (std::size_t i = 0; i < hw; ++i) map[i] = peak > 0 ? st.maps[t * hw + i] / peak : 0.0f;
        const std::string name = "stage" + std::to_string(s) + "_word" + std::to_string(t) + "_" +
                                 m.vocab.token(caption.tokens[t]) + ".png";
        write_file((std::filesystem::path(a.attention_dir) / name).string(), data::encode_gray_png(map));
      }
    }
  }
  out << nlohmann::json{{"out", a.out}, {"width", r.image.dim(2)}, {"height", r.image.dim(1)}}.dump() << '\n';
  return kExitOk;
}

inline int run_eval(const EvalArgs& a, std::ostream& out) {
  const model::LoadedModel m = model::load_model_file(a.checkpoint);
  if (!a.preset.empty() || !a.config.empty()) model::require_config(m, model_config_from(a.preset, a.config));
  const data::DatasetManifest manifest = data::load_dataset(a.data);
  const train::TrainingSet set = train::make_training_set(manifest, m.vocab, m.config.image_size, m.config.text.max_len);
  const nlohmann::json report = train::evaluate(m, set, jpeg::QualityFactor(a.qf));
  if (!a.out.empty()) write_file(a.out, report.dump(2) + "\n");
  out << report.dump() << '\n';
  return kExitOk;
}

inline int run_serve(const ServeArgs& a, std::ostream& err) {
  const Service service(model::load_model_file(a.checkpoint));
  if (!serve(service, a.host, a.port, err)) throw Error("cannot listen on " + a.host + ":" + std::to_string(a.port));
  return kExitOk;
}

inline const char* error_kind(const std::exception& e) {
  if (dynamic_cast<const ConfigMismatchError*>(&e)) return "config_mismatch";
  if (dynamic_cast<const LoadError*>(&e)) return "load";
  if (dynamic_cast<const ShapeError*>(&e)) return "shape";
  if (dynamic_cast<const DomainError*>(&e)) return "domain";
  if (dynamic_cast<const NumericError*>(&e)) return "numeric";
  return "runtime";
}

}  // namespace cli_detail

inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace cli_detail;
  CLI::App app{"Text-guided JPEG artifact reduction"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  DegradeArgs dg;
  auto* degrade = app.add_subcommand("degrade", "JPEG round trip of a PNG at a quality factor");
  degrade->add_option("--qf", dg.qf, "Quality factor")->required()->check(CLI::Range(1, 100));
  degrade->add_option("--subsampling", dg.subsampling, "Chroma subsampling")->check(CLI::IsMember({"420", "444"}))
      ->capture_default_str();
  degrade->add_option("--in", dg.in, "Input PNG or JPEG")->required();
  degrade->add_option("--out", dg.out, "Output PNG")->required();

  TrainArgs tr;
  auto* trainc = app.add_subcommand("train", "Train the text encoders (damsm) or the deblocking GAN (adv)");
  trainc->add_option("--data", tr.data, "Dataset root with images/ and captions/")->required();
  trainc->add_option("--out", tr.out, "Checkpoint to write")->required();
  trainc->add_option("--stage", tr.stage, "Training stage")->check(CLI::IsMember({"damsm", "adv"}))->capture_default_str();
  trainc->add_option("--preset", tr.preset, "Model preset")->check(CLI::IsMember({"full", "desk", "tiny"}))
      ->capture_default_str();
  trainc->add_option("--config", tr.config, "Training config JSON (overrides --preset)");
  trainc->add_option("--encoders", tr.encoders, "Stage-1 checkpoint whose encoders the adv stage starts from");
  trainc->add_option("--resume", tr.resume, "Continue from a checkpoint written by train");
  trainc->add_option("--log", tr.log, "Append JSON log lines here instead of stdout");
  trainc->add_option("--qf", tr.qf, "Training quality factor")->check(CLI::Range(1, 100));
  trainc->add_option("--batch-size", tr.batch_size, "Batch size")->check(CLI::PositiveNumber);
  trainc->add_option("--epochs", tr.epochs, "Epochs");
  trainc->add_option("--max-steps", tr.max_steps, "Stop after this many steps");
  trainc->add_option("--lr", tr.lr, "Initial learning rate")->check(CLI::PositiveNumber);
  trainc->add_option("--lr-decay-every", tr.lr_decay_every, "Epochs between decade decays")->check(CLI::PositiveNumber);
  trainc->add_option("--seed", tr.seed, "Random seed");
  trainc->add_option("--checkpoint-every", tr.checkpoint_every, "Also write --out every N steps");
  trainc->add_flag("--no-flip", tr.no_flip, "Disable horizontal-flip augmentation");
  trainc->get_option("--resume")->excludes("--encoders");

  DeblockArgs db;
  auto* deblock = app.add_subcommand("deblock", "Restore a compressed image guided by a caption");
  deblock->add_option("--checkpoint", db.checkpoint, "Trained checkpoint")->required();
  deblock->add_option("--in", db.in, "Compressed input image")->required();
  deblock->add_option("--caption", db.caption, "Caption text")->required();
  deblock->add_option("--out", db.out, "Output PNG")->required();
  deblock->add_option("--qf", db.qf, "Degrade the input at this quality factor first")->check(CLI::Range(1, 100));
  deblock->add_option("--attention-dir", db.attention_dir, "Write per-word attention maps here");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "PSNR, perceptual distance and FID-small on a dataset");
  eval->add_option("--checkpoint", ev.checkpoint, "Trained checkpoint")->required();
  eval->add_option("--data", ev.data, "Dataset root")->required();
  eval->add_option("--qf", ev.qf, "Quality factor")->check(CLI::Range(1, 100))->capture_default_str();
  eval->add_option("--preset", ev.preset, "Expected model preset; refuses a checkpoint with another config")
      ->check(CLI::IsMember({"full", "desk", "tiny"}));
  eval->add_option("--config", ev.config, "Expected model config JSON");
  eval->add_option("--out", ev.out, "Also write the report here");

  ServeArgs sv;
  auto* servec = app.add_subcommand("serve", "HTTP/JSON service for degrade and deblock");
  servec->add_option("--checkpoint", sv.checkpoint, "Trained checkpoint")->required();
  servec->add_option("--port", sv.port, std::string("Port (environment: ") + kPortEnv + ")")
      ->envname(kPortEnv)
      ->check(CLI::Range(1, 65535))
      ->capture_default_str();
  servec->add_option("--host", sv.host, "Bind address")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << nlohmann::json{{"error", e.what()}, {"kind", "usage"}}.dump() << '\n';
    const CLI::App* sub = nullptr;
    for (const auto* s : app.get_subcommands()) sub = s;
    err << (sub ? sub->help() : app.help());
    return kExitUsage;
  }

  try {
    if (degrade->parsed()) return run_degrade(dg, out);
    if (trainc->parsed()) return run_train(tr, out);
    if (deblock->parsed()) return run_deblock(db, out);
    if (eval->parsed()) return run_eval(ev, out);
    return run_serve(sv, err);
  } catch (const std::exception& e) {
    err << nlohmann::json{{"error", e.what()}, {"kind", error_kind(e)}}.dump() << '\n';
    return kExitRuntime;
  }
}

}  // namespace tgjar::app
