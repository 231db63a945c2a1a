#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "jrm/denoiser.hpp"
#include "jrm/io.hpp"

namespace jrm {

namespace fs = std::filesystem;

/// Run configuration: a flat key = value file over documented defaults.
/// Every key the code reads has a default here, so the effective
/// configuration (and its hash) is always complete.
class ExperimentConfig {
 public:
  ExperimentConfig() {
    kv_.set("seed", std::uint64_t{0});
    kv_.set("corpus.size", 200);
    kv_.set("corpus.hold_out_every", 10);
    kv_.set("bench.scenes", 50);
    kv_.set("bench.noise_sigma", 0.005);
    kv_.set("bench.dropout", 0.3);
    kv_.set("train.name", std::string("main"));
    kv_.set("train.steps", 20000);
    kv_.set("train.batch", 1);
    kv_.set("train.lr", 1e-3);
    kv_.set("train.clip", 1.0);
    kv_.set("train.neg_ratio", 0.1);
    kv_.set("train.k", 2);
    kv_.set("train.log_every", 100);
    kv_.set("train.checkpoint_every", 1000);
    kv_.set("train.articulation_prob", 0.5);
    kv_.set("train.occluders", 2);
    kv_.set("train.overfit", 0);  // 1: every step reuses the first batch and one noise draw
    const io::KeyValues model_defaults = ModelConfig{}.to_kv();
    for (const auto& [k, v] : model_defaults.entries()) kv_.set(k, v);
    kv_.set("eval.steps", 50);
    kv_.set("eval.tau", 0.05);
    kv_.set("eval.max_k", 9);
    kv_.set("eval.scenes", 0);
    kv_.set("sweep.align.rot_deg", std::string("0 5 10 15 20 25 30 35 40 45"));
    kv_.set("sweep.align.max_trans", 0.3);
    kv_.set("sweep.match.max_wrong", 4);
    kv_.set("sweep.negratio.values", std::string("0 0.1 0.5 0.9 1"));
  }

  /// Overlays a parsed file; unknown keys are rejected so typos fail loudly.
  void merge(const io::KeyValues& overrides) {
    for (const auto& [k, v] : overrides.entries()) {
      if (!kv_.has(k)) throw ConfigError("unknown config key '" + k + "'");
      kv_.set(k, v);
    }
    validate();
  }

  static ExperimentConfig load(const fs::path& path) {
    ExperimentConfig c;
    c.merge(io::KeyValues::load(path));
    return c;
  }

  void set(const std::string& key, const std::string& value) {
    if (!kv_.has(key)) throw ConfigError("unknown config key '" + key + "'");
    kv_.set(key, value);
  }

  [[nodiscard]] const io::KeyValues& values() const { return kv_; }
  [[nodiscard]] std::string str(const std::string& k) const { return kv_.get(k); }
  [[nodiscard]] double real(const std::string& k) const { return kv_.get_double(k); }
  [[nodiscard]] std::int64_t integer(const std::string& k) const { return kv_.get_int(k); }
  [[nodiscard]] std::size_t count(const std::string& k) const {
    const std::int64_t v = kv_.get_int(k);
    if (v < 0) throw ConfigError("key '" + k + "' must be non-negative");
    return static_cast<std::size_t>(v);
  }
  [[nodiscard]] std::uint64_t seed() const { return kv_.get_u64("seed"); }

  [[nodiscard]] std::vector<double> reals(const std::string& k) const {
    std::istringstream in(kv_.get(k));
    std::vector<double> out;
    std::string tok;
    while (in >> tok) {
      try {
        std::size_t used = 0;
        out.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ConfigError("key '" + k + "' has a non-numeric entry '" + tok + "'");
      }
    }
    if (out.empty()) throw ConfigError("key '" + k + "' is empty");
    return out;
  }

  [[nodiscard]] ModelConfig model() const { return ModelConfig::from_kv(kv_); }

  /// Stable identifier of everything that can change results.
  [[nodiscard]] std::string hash() const { return io::hex64(io::fnv1a(kv_.serialize())); }

  void validate() const {
    (void)model();
    if (count("corpus.size") < 100) throw ConfigError("corpus.size must be >= 100");
    if (count("train.batch") < 1) throw ConfigError("train.batch must be >= 1");
    if (count("train.k") < 1) throw ConfigError("train.k must be >= 1");
    if (count("train.log_every") < 1 || count("train.checkpoint_every") < 1)
      throw ConfigError("train.log_every and train.checkpoint_every must be >= 1");
    if (count("train.overfit") > 1) throw ConfigError("train.overfit must be 0 or 1");
    const double r = real("train.neg_ratio");
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("train.neg_ratio must lie in [0, 1]");
    if (count("eval.steps") < 1) throw ConfigError("eval.steps must be >= 1");
    const auto rot = reals("sweep.align.rot_deg");
    if (rot.size() < 2 || !std::is_sorted(rot.begin(), rot.end()) || rot.front() != 0.0)
      throw ConfigError("sweep.align.rot_deg must be ascending and start at 0");
    for (double v : reals("sweep.negratio.values"))
      if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("sweep.negratio.values must lie in [0, 1]");
  }

 private:
  io::KeyValues kv_;
};

// ---------------------------------------------------------------------------
// Workspace layout shared by all subcommands.

struct Workspace {
  fs::path root;

  [[nodiscard]] fs::path corpus() const { return root / "corpus"; }
  [[nodiscard]] fs::path bench(std::string_view kind) const { return root / "data" / kind; }
  [[nodiscard]] fs::path train(const std::string& name) const { return root / "train" / name; }
  [[nodiscard]] fs::path eval() const { return root / "eval"; }
  [[nodiscard]] fs::path sweep() const { return root / "sweep"; }
  [[nodiscard]] fs::path report() const { return root / "report"; }
};

// ---------------------------------------------------------------------------
// CSV

class CsvTable {
 public:
  explicit CsvTable(std::string header) : text_(std::move(header) + "\n") {}

  template <typename... Fields>
  void row(const Fields&... fields) {
    std::string line;
    (append(line, fields), ...);
    line.back() = '\n';
    text_ += line;
  }

  [[nodiscard]] const std::string& text() const { return text_; }
  void save(const fs::path& path) const { io::write_file(path, text_); }

 private:
  static void append(std::string& line, const std::string& s) { line += s + ","; }
  static void append(std::string& line, const char* s) { line += std::string(s) + ","; }
  static void append(std::string& line, std::string_view s) { line += std::string(s) + ","; }
  static void append(std::string& line, double v) { line += io::fmt_double(v) + ","; }
  static void append(std::string& line, std::size_t v) { line += std::to_string(v) + ","; }
  static void append(std::string& line, int v) { line += std::to_string(v) + ","; }

  std::string text_;
};

/// Rows of a CSV file keyed by header name.
struct CsvData {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  [[nodiscard]] std::size_t column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw InputError("csv has no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  }

  static CsvData parse(const std::string& text) {
    CsvData d;
    std::istringstream in(text);
    std::string line;
    auto split = [](const std::string& l) {
      std::vector<std::string> out;
      std::string cell;
      std::istringstream ls(l);
      while (std::getline(ls, cell, ',')) out.push_back(cell);
      if (!l.empty() && l.back() == ',') out.emplace_back();
      return out;
    };
    if (!std::getline(in, line)) throw InputError("empty csv");
    d.header = split(line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto r = split(line);
      if (r.size() != d.header.size()) throw InputError("csv row has the wrong field count");
      d.rows.push_back(std::move(r));
    }
    return d;
  }

  static CsvData load(const fs::path& path) { return parse(io::read_file(path)); }
};

// ---------------------------------------------------------------------------
// Parallel loop. Work items write to their own slots; the caller combines
// them in index order, so results never depend on the thread count.

template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// `path = checksum size` lines for every file, relative to `root`.
inline io::KeyValues file_manifest(const fs::path& root, const std::vector<fs::path>& files) {
  io::KeyValues kv;
  for (const fs::path& rel : files) {
    const std::string bytes = io::read_file(root / rel);
    kv.set("file." + rel.generic_string(),
           io::hex64(io::fnv1a(bytes)) + " " + std::to_string(bytes.size()));
  }
  return kv;
}

}  // namespace jrm
