// jrm_cli: corpus / benchmark generation, training, evaluation, sweeps and
// reports over one workspace directory.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "jrm/pipeline.hpp"

namespace {

struct Globals {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::string out = "workspace";
  std::size_t threads = 1;
  std::vector<std::string> overrides;
};

jrm::ExperimentConfig load_config(const Globals& g) {
  jrm::ExperimentConfig cfg;
  if (!g.config_file.empty()) cfg = jrm::ExperimentConfig::load(g.config_file);
  for (const std::string& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw jrm::ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.seed) cfg.set("seed", std::to_string(*g.seed));
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint reconstruction benchmark driver"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_file, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "master seed (overrides the config)");
  app.add_option("--out", g.out, "workspace directory");
  app.add_option("--threads", g.threads, "worker threads (results do not depend on it)")
      ->check(CLI::PositiveNumber);
  app.add_option("--set", g.overrides, "config override key=value (repeatable)");

  auto* corpus = app.add_subcommand("corpus", "build the procedural shape corpus");
  auto* scenes = app.add_subcommand("scenes", "generate a benchmark dataset");
  std::string scene_kind;
  scenes->add_option("kind", scene_kind, "spatial | temporal | articulated")
      ->required()
      ->check(CLI::IsMember({"spatial", "temporal", "articulated"}));
  auto* train = app.add_subcommand("train", "train the joint denoiser");
  bool resume = false;
  train->add_flag("--resume", resume, "continue from the stored checkpoint");
  auto* eval = app.add_subcommand("eval", "evaluate JRM and the alignment baselines");
  std::vector<std::string> eval_kinds;
  eval->add_option("--benchmark", eval_kinds, "restrict to these benchmarks")
      ->check(CLI::IsMember({"spatial", "temporal", "articulated"}));
  auto* sweep = app.add_subcommand("sweep", "error / ablation sweeps");
  std::string sweep_kind;
  sweep->add_option("kind", sweep_kind, "align | match | negratio")
      ->required()
      ->check(CLI::IsMember({"align", "match", "negratio"}));
  auto* report = app.add_subcommand("report", "markdown tables and SVG plots");

  CLI11_PARSE(app, argc, argv);

  try {
    const jrm::ExperimentConfig cfg = load_config(g);
    const jrm::Workspace ws{g.out};
    const jrm::pipeline::RunOptions opt{g.threads, &std::cerr};
    if (corpus->parsed()) {
      jrm::pipeline::cmd_corpus(cfg, ws, opt);
    } else if (scenes->parsed()) {
      jrm::pipeline::cmd_scenes(cfg, ws, jrm::parse_benchmark(scene_kind), opt);
    } else if (train->parsed()) {
      jrm::pipeline::cmd_train(cfg, ws, resume, opt);
    } else if (eval->parsed()) {
      std::vector<jrm::BenchmarkKind> kinds;
      for (const auto& k : eval_kinds) kinds.push_back(jrm::parse_benchmark(k));
      jrm::pipeline::cmd_eval(cfg, ws, kinds, opt);
    } else if (sweep->parsed()) {
      jrm::pipeline::cmd_sweep(cfg, ws, sweep_kind, opt);
    } else if (report->parsed()) {
      jrm::pipeline::cmd_report(ws, opt);
    }
  } catch (const jrm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
