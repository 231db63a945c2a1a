#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "jrm/checkpoint.hpp"
#include "jrm/config.hpp"
#include "jrm/corpus.hpp"
#include "jrm/pairing.hpp"

namespace jrm {

// ---------------------------------------------------------------------------
// Corpus plus calibrated pairing thresholds, as stored under <ws>/corpus.

struct CorpusBundle {
  Corpus corpus;
  PairingThresholds thresholds;
};

inline CorpusBundle make_corpus_bundle(const ExperimentConfig& cfg) {
  CorpusBundle b;
  b.corpus = build_corpus(mix_seed(cfg.seed(), 0xC0A), cfg.count("corpus.size"),
                          cfg.count("corpus.hold_out_every"));
  b.thresholds = calibrate_thresholds(b.corpus, mix_seed(cfg.seed(), 0xCA1));
  return b;
}

inline void write_corpus_bundle(const fs::path& dir, const CorpusBundle& b,
                                const ExperimentConfig& cfg) {
  auto files = write_corpus(dir, b.corpus);
  io::KeyValues th = b.thresholds.to_kv();
  th.set("config_hash", cfg.hash());
  th.set("seed", cfg.seed());
  th.save(dir / "pairing.txt");
  files.emplace_back("pairing.txt");
  io::KeyValues manifest = file_manifest(dir, files);
  manifest.set("config_hash", cfg.hash());
  manifest.set("seed", cfg.seed());
  manifest.save(dir / "manifest.txt");
}

inline CorpusBundle load_corpus_bundle(const fs::path& dir) {
  if (!fs::exists(dir / "corpus.txt"))
    throw IoError("corpus missing at " + dir.string() + " (run the corpus command first)");
  CorpusBundle b;
  b.corpus = load_corpus(dir);
  const auto kv = io::KeyValues::load(dir / "pairing.txt");
  b.thresholds.positive_thr = kv.get_double("pairing.positive_thr");
  b.thresholds.similar_thr = kv.get_double("pairing.similar_thr");
  b.thresholds.same_shape_pass = kv.get_double("pairing.same_shape_pass");
  b.thresholds.cross_family_pass = kv.get_double("pairing.cross_family_pass");
  b.thresholds.cross_family_similar_pass = kv.get_double("pairing.cross_family_similar_pass");
  b.thresholds.same_family_similar_pass = kv.get_double("pairing.same_family_similar_pass");
  return b;
}

// ---------------------------------------------------------------------------
// Training

/// Hash over the keys that influence training; evaluation settings can change
/// without invalidating a checkpoint.
inline std::string training_hash(const ExperimentConfig& cfg) {
  io::KeyValues kv;
  for (const auto& [k, v] : cfg.values().entries())
    if ((k == "seed" || k.starts_with("corpus.") || k.starts_with("model.") ||
         k.starts_with("train.") || k == "bench.noise_sigma" || k == "bench.dropout") &&
        k != "train.name" && k != "train.log_every" && k != "train.checkpoint_every")
      kv.set(k, v);
  return io::hex64(io::fnv1a(kv.serialize()));
}

struct TrainOutcome {
  std::uint64_t start_step = 0;
  std::uint64_t steps_done = 0;
  double last_window_loss = 0.0;
  double first_window_loss = 0.0;
  bool aborted = false;
  std::string message;
};

inline constexpr const char* kLossCsvHeader =
    "config_hash,seed,step,loss,grad_norm,negatives,same_asset";

inline fs::path checkpoint_path(const fs::path& train_dir) { return train_dir / "checkpoint.bin"; }

/// Reads the checkpoint of a finished run whose training hash matches `cfg`.
inline std::optional<LoadedCheckpoint> completed_checkpoint(const fs::path& train_dir,
                                                            const ExperimentConfig& cfg) {
  const fs::path p = checkpoint_path(train_dir);
  if (!fs::exists(p)) return std::nullopt;
  LoadedCheckpoint ck = load_checkpoint(p);
  if (ck.info.metadata.get_or("training_hash", "") != training_hash(cfg) ||
      ck.info.step != cfg.count("train.steps"))
    return std::nullopt;
  return ck;
}

/// Pair-wise flow-matching training. Writes <dir>/loss.csv (window means every
/// train.log_every steps), <dir>/checkpoint.bin every train.checkpoint_every
/// steps and at the end, and <dir>/status.txt. A non-finite loss stops the run
/// and leaves the last checkpoint in place. With `resume`, training continues
/// from the stored step and reproduces the uninterrupted trajectory.
inline TrainOutcome train_model(const ExperimentConfig& cfg, const CorpusBundle& data,
                                const fs::path& dir, bool resume, std::ostream* progress = nullptr,
                                std::optional<std::uint64_t> stop_after = std::nullopt) {
  const std::uint64_t seed = cfg.seed();
  const std::size_t steps = cfg.count("train.steps");
  const std::size_t batch = cfg.count("train.batch");
  const std::size_t log_every = cfg.count("train.log_every");
  const std::size_t ckpt_every = cfg.count("train.checkpoint_every");
  const std::size_t k_train = cfg.count("train.k");
  const double lr = cfg.real("train.lr");
  const double clip = cfg.real("train.clip");
  const bool overfit = cfg.count("train.overfit") == 1;
  if (k_train > 2) throw ConfigError("train.k above 2 is not supported by the pair sampler");
  if (ckpt_every % log_every != 0)
    throw ConfigError("train.checkpoint_every must be a multiple of train.log_every");

  PairOptions popt;
  popt.articulation_prob = cfg.real("train.articulation_prob");
  popt.view.occluders = cfg.count("train.occluders");
  popt.view.noise_sigma = cfg.real("bench.noise_sigma");
  popt.view.dropout = cfg.real("bench.dropout");
  popt.tokens = static_cast<std::size_t>(cfg.model().tokens);
  const PairStream stream(data.corpus, cfg.real("train.neg_ratio"), data.thresholds,
                          mix_seed(seed, 0x22), popt);

  Denoiser<float> model(cfg.model());
  AdamState<float> adam;
  std::uint64_t step = 0;
  CsvTable log(kLossCsvHeader);
  TrainOutcome out;
  const fs::path ckpt = checkpoint_path(dir);
  if (resume && fs::exists(ckpt)) {
    LoadedCheckpoint ck = load_checkpoint(ckpt);
    if (ck.info.metadata.get_or("training_hash", "") != training_hash(cfg))
      throw ConfigError("resume: checkpoint was trained with a different configuration");
    model = std::move(ck.model);
    adam = std::move(ck.adam);
    step = ck.info.step;
    if (fs::exists(dir / "loss.csv")) {
      const CsvData old = CsvData::load(dir / "loss.csv");
      const std::size_t sc = old.column("step");
      for (const auto& r : old.rows) {
        if (std::stoull(r[sc]) > step) continue;
        std::string line;
        for (const auto& c : r) line += (line.empty() ? "" : ",") + c;
        log.row(line);
      }
    }
  } else {
    model.init_params(mix_seed(seed, 0x11));
    adam.reset(model.params);
  }
  out.start_step = step;

  io::KeyValues meta;
  for (const auto& [k, v] : cfg.values().entries()) meta.set("config." + k, v);
  meta.set("config_hash", cfg.hash());
  meta.set("training_hash", training_hash(cfg));
  meta.set("seed", seed);
  meta.set("neg_ratio", cfg.real("train.neg_ratio"));
  meta.set("same_asset_share", stream.same_asset_share());
  const io::KeyValues th_kv = data.thresholds.to_kv();
  for (const auto& [k, v] : th_kv.entries()) meta.set(k, v);

  const std::string hash = cfg.hash();
  double window = 0.0, last_norm = 0.0;
  std::size_t negatives = 0, same_asset = 0, in_window = 0;
  bool first_window = true;
  const auto t0 = std::chrono::steady_clock::now();
  auto save = [&] {
    save_checkpoint(ckpt, model, adam, {meta, step});
    log.save(dir / "loss.csv");
  };
  fs::create_directories(dir);
  try {
    while (step < steps) {
      if (stop_after && step >= *stop_after) break;
      std::vector<JointExample> examples;
      for (std::size_t b = 0; b < batch; ++b) {
        const TrainingPair pair = stream.at(overfit ? b : step * batch + b);
        negatives += pair.label == PairLabel::Negative;
        same_asset += pair.label == PairLabel::Positive && pair.same_asset();
        JointExample ex = to_example(pair);
        ex.observations.resize(k_train);
        ex.targets.resize(k_train);
        examples.push_back(std::move(ex));
      }
      const TrainStats st =
          train_step(model, adam, examples, mix_seed(seed, 0x33, overfit ? 0 : step), lr, clip);
      ++step;
      window += st.loss;
      last_norm = st.grad_norm;
      ++in_window;
      if (step % log_every == 0) {
        const double mean = window / static_cast<double>(in_window);
        log.row(hash, seed, static_cast<std::size_t>(step), mean, last_norm, negatives, same_asset);
        if (first_window && out.start_step == 0) out.first_window_loss = mean;
        first_window = false;
        out.last_window_loss = mean;
        if (progress) {
          const double secs =
              std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
          *progress << "step " << step << "/" << steps << " loss " << mean << " ("
                    << static_cast<int>(secs) << " s)\n"
                    << std::flush;
        }
        window = 0.0;
        negatives = same_asset = in_window = 0;
      }
      if (step % ckpt_every == 0 || step == steps) save();
    }
  } catch (const NonFiniteError& e) {
    out.aborted = true;
    out.message = "aborted at step " + std::to_string(step + 1) + ": " + e.what();
    io::write_file(dir / "status.txt", out.message + "\n");
    out.steps_done = step;
    return out;
  }
  if (step % ckpt_every != 0 && step != steps) save();
  out.steps_done = step;
  io::write_file(dir / "status.txt", step == steps ? "complete\n" : "partial\n");
  return out;
}

/// Completed checkpoint for `cfg` under `dir`, training (or resuming) first
/// when needed.
inline Denoiser<float> ensure_trained(const ExperimentConfig& cfg, const CorpusBundle& data,
                                      const fs::path& dir, std::ostream* progress = nullptr) {
  if (auto ck = completed_checkpoint(dir, cfg)) return std::move(ck->model);
  bool resume = false;
  if (fs::exists(checkpoint_path(dir))) {
    const LoadedCheckpoint ck = load_checkpoint(checkpoint_path(dir));
    resume = ck.info.metadata.get_or("training_hash", "") == training_hash(cfg) &&
             ck.info.step < cfg.count("train.steps");
  }
  const TrainOutcome o = train_model(cfg, data, dir, resume, progress);
  if (o.aborted) throw NonFiniteError(o.message);
  return load_checkpoint(checkpoint_path(dir)).model;
}

}  // namespace jrm
