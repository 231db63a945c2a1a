#pragma once

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "jrm/benchmark.hpp"
#include "jrm/config.hpp"
#include "jrm/evaluation.hpp"
#include "jrm/report.hpp"
#include "jrm/training.hpp"

// Subcommand bodies shared by the CLI, tests and the acceptance runner.
namespace jrm::pipeline {

struct RunOptions {
  std::size_t threads = 1;
  std::ostream* log = nullptr;
};

inline void note(const RunOptions& o, const std::string& msg) {
  if (o.log) *o.log << msg << "\n" << std::flush;
}

inline void echo_config(const fs::path& dir, const ExperimentConfig& cfg) {
  io::KeyValues kv = cfg.values();
  kv.set("config_hash", cfg.hash());
  kv.save(dir / "config.txt");
}

inline CorpusBundle cmd_corpus(const ExperimentConfig& cfg, const Workspace& ws, const RunOptions& o = {}) {
  CorpusBundle b = make_corpus_bundle(cfg);
  write_corpus_bundle(ws.corpus(), b, cfg);
  note(o, "corpus: " + std::to_string(b.corpus.size()) + " shapes (" +
              std::to_string(b.corpus.held_out_ids().size()) + " held out) -> " + ws.corpus().string());
  return b;
}

inline std::uint64_t scene_seed(const ExperimentConfig& cfg, BenchmarkKind kind, std::size_t id) {
  return mix_seed(cfg.seed(), 0x5CE0 + static_cast<std::uint64_t>(kind), id);
}

inline BenchOptions bench_options(const ExperimentConfig& cfg) {
  BenchOptions b;
  b.noise_sigma = cfg.real("bench.noise_sigma");
  b.dropout = cfg.real("bench.dropout");
  return b;
}

inline std::vector<BenchScene> make_scenes(const ExperimentConfig& cfg, const CorpusBundle& data,
                                           BenchmarkKind kind, std::size_t count, std::size_t threads) {
  std::vector<BenchScene> scenes(count);
  const BenchOptions opt = bench_options(cfg);
  parallel_for(count, threads, [&](std::size_t i) {
    scenes[i] = build_scene(kind, data.corpus, data.thresholds, i, scene_seed(cfg, kind, i), opt);
  });
  return scenes;
}

inline std::vector<BenchScene> cmd_scenes(const ExperimentConfig& cfg, const Workspace& ws,
                                          BenchmarkKind kind, const RunOptions& o = {}) {
  const CorpusBundle data = load_corpus_bundle(ws.corpus());
  const std::size_t count = cfg.count("bench.scenes");
  auto scenes = make_scenes(cfg, data, kind, count, o.threads);
  const fs::path root = ws.bench(benchmark_name(kind));
  if (fs::exists(root / "scenes")) fs::remove_all(root / "scenes");
  std::vector<fs::path> files;
  for (const BenchScene& s : scenes) {
    auto f = write_scene(root, s, data.corpus);
    files.insert(files.end(), f.begin(), f.end());
  }
  io::KeyValues manifest = file_manifest(root, files);
  manifest.set("benchmark", std::string(benchmark_name(kind)));
  manifest.set("scenes", static_cast<std::uint64_t>(count));
  manifest.set("config_hash", cfg.hash());
  manifest.set("seed", cfg.seed());
  manifest.save(root / "manifest.txt");
  echo_config(root, cfg);
  note(o, "scenes: " + std::to_string(count) + " " + std::string(benchmark_name(kind)) + " scenes -> " +
              root.string());
  return scenes;
}

inline TrainOutcome cmd_train(const ExperimentConfig& cfg, const Workspace& ws, bool resume,
                              const RunOptions& o = {}) {
  const CorpusBundle data = load_corpus_bundle(ws.corpus());
  const fs::path dir = ws.train(cfg.str("train.name"));
  fs::create_directories(dir);
  echo_config(dir, cfg);
  TrainOutcome out = train_model(cfg, data, dir, resume, o.log);
  if (out.aborted) throw NonFiniteError(out.message + " (last checkpoint kept in " + dir.string() + ")");
  note(o, "train: " + std::to_string(out.steps_done) + " steps -> " + checkpoint_path(dir).string());
  return out;
}

inline Denoiser<float> trained_model(const ExperimentConfig& cfg, const Workspace& ws) {
  const fs::path dir = ws.train(cfg.str("train.name"));
  if (!fs::exists(checkpoint_path(dir)))
    throw IoError("no checkpoint at " + checkpoint_path(dir).string() + " (run the train command first)");
  auto ck = completed_checkpoint(dir, cfg);
  if (!ck)
    throw IoError("checkpoint " + checkpoint_path(dir).string() +
                  " is incomplete or was trained with a different configuration");
  return std::move(ck->model);
}

inline std::vector<BenchScene> load_scenes(const ExperimentConfig& cfg, const Workspace& ws,
                                           BenchmarkKind kind) {
  auto scenes = read_benchmark(ws.bench(benchmark_name(kind)));
  const std::size_t limit = cfg.count("eval.scenes");
  if (limit > 0 && scenes.size() > limit) scenes.resize(limit);
  return scenes;
}

inline std::vector<BenchmarkKind> available_benchmarks(const Workspace& ws) {
  std::vector<BenchmarkKind> out;
  for (BenchmarkKind k : {BenchmarkKind::Spatial, BenchmarkKind::Temporal, BenchmarkKind::Articulated})
    if (fs::exists(ws.bench(benchmark_name(k)) / "manifest.txt")) out.push_back(k);
  return out;
}

/// Evaluates the given benchmarks (all generated ones when empty) and writes
/// <ws>/eval/<kind>.csv.
inline std::vector<EvalRow> cmd_eval(const ExperimentConfig& cfg, const Workspace& ws,
                                     std::vector<BenchmarkKind> kinds, const RunOptions& o = {}) {
  if (kinds.empty()) kinds = available_benchmarks(ws);
  if (kinds.empty())
    throw IoError("no benchmark data under " + (ws.root / "data").string() + " (run the scenes command first)");
  Denoiser<float> model = trained_model(cfg, ws);
  const EvalContext ctx = make_eval_context(model, cfg);
  fs::create_directories(ws.eval());
  std::vector<EvalRow> all;
  for (BenchmarkKind k : kinds) {
    const auto scenes = load_scenes(cfg, ws, k);
    auto rows = evaluate_benchmark(ctx, scenes, o.threads);
    const fs::path out = ws.eval() / (std::string(benchmark_name(k)) + ".csv");
    eval_table(ctx, rows).save(out);
    note(o, "eval: " + std::to_string(rows.size()) + " rows -> " + out.string());
    all.insert(all.end(), std::make_move_iterator(rows.begin()), std::make_move_iterator(rows.end()));
  }
  echo_config(ws.eval(), cfg);
  return all;
}

/// Training directory of the model with negative ratio `ratio`; the main run
/// is reused when its training settings coincide.
inline fs::path negratio_dir(const ExperimentConfig& cfg, const Workspace& ws, double ratio) {
  ExperimentConfig c = cfg;
  c.set("train.neg_ratio", io::fmt_double(ratio));
  if (training_hash(c) == training_hash(cfg)) return ws.train(cfg.str("train.name"));
  return ws.train("negratio_" + io::fmt_double(ratio));
}

inline void save_sweep(const ExperimentConfig& cfg, const Workspace& ws, const std::string& name,
                       const EvalContext& ctx, const std::vector<SweepRow>& rows, const RunOptions& o) {
  fs::create_directories(ws.sweep());
  sweep_table(ctx, rows).save(ws.sweep() / (name + ".csv"));
  sweep_long_table(cfg.hash(), cfg.seed(), name, sweep_rows_to_results(rows))
      .save(ws.sweep() / (name + "_long.csv"));
  echo_config(ws.sweep(), cfg);
  note(o, "sweep " + name + ": " + std::to_string(rows.size()) + " rows -> " +
              (ws.sweep() / (name + ".csv")).string());
}

inline std::vector<SweepRow> cmd_sweep(const ExperimentConfig& cfg, const Workspace& ws,
                                       const std::string& which, const RunOptions& o = {}) {
  if (which == "align" || which == "match") {
    Denoiser<float> model = trained_model(cfg, ws);
    const EvalContext ctx = make_eval_context(model, cfg);
    std::vector<SweepRow> rows;
    if (which == "align") {
      rows = sweep_alignment(ctx, load_scenes(cfg, ws, BenchmarkKind::Spatial),
                             cfg.reals("sweep.align.rot_deg"), cfg.real("sweep.align.max_trans"),
                             o.threads);
    } else {
      rows = sweep_matching(ctx, load_scenes(cfg, ws, BenchmarkKind::Temporal),
                            cfg.count("sweep.match.max_wrong"), o.threads);
    }
    save_sweep(cfg, ws, which, ctx, rows, o);
    return rows;
  }
  if (which != "negratio") throw ConfigError("unknown sweep '" + which + "' (align, match, negratio)");
  const CorpusBundle data = load_corpus_bundle(ws.corpus());
  const auto scenes = load_scenes(cfg, ws, BenchmarkKind::Spatial);
  const auto ratios = cfg.reals("sweep.negratio.values");
  std::vector<SweepRow> rows;
  EvalContext ctx;
  for (std::size_t c = 0; c < ratios.size(); ++c) {
    ExperimentConfig rc = cfg;
    rc.set("train.neg_ratio", io::fmt_double(ratios[c]));
    const fs::path dir = negratio_dir(cfg, ws, ratios[c]);
    note(o, "negratio " + io::fmt_double(ratios[c]) + ": model " + dir.string());
    Denoiser<float> model = ensure_trained(rc, data, dir, o.log);
    ctx = make_eval_context(model, cfg);
    auto part = sweep_negratio_cell(ctx, scenes, c, ratios[c], o.threads);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  ctx.model = nullptr;
  save_sweep(cfg, ws, which, ctx, rows, o);
  return rows;
}

inline std::string cmd_report(const Workspace& ws, const RunOptions& o = {}) {
  std::string md = write_report(ws);
  note(o, "report -> " + (ws.report() / "summary.md").string());
  return md;
}

}  // namespace jrm::pipeline
