#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "jrm/common.hpp"
#include "jrm/io.hpp"
#include "jrm/shapes.hpp"

namespace jrm {

inline constexpr std::size_t kDefaultCorpusSize = 200;
inline constexpr std::size_t kDefaultHoldOutEvery = 10;

/// Procedural shape collection. Families are assigned round-robin and every
/// `hold_out_every`-th shape is reserved for evaluation.
struct Corpus {
  std::vector<CanonicalShape> shapes;
  std::vector<Descriptor> descriptors;
  std::vector<bool> held_out;
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t size() const { return shapes.size(); }
  [[nodiscard]] ShapeFamily family(std::size_t i) const { return shapes.at(i).spec.family; }

  [[nodiscard]] std::vector<std::size_t> train_ids() const { return ids(false); }
  [[nodiscard]] std::vector<std::size_t> held_out_ids() const { return ids(true); }

 private:
  [[nodiscard]] std::vector<std::size_t> ids(bool want_held_out) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < shapes.size(); ++i)
      if (held_out[i] == want_held_out) out.push_back(i);
    return out;
  }
};

inline void add_shape(Corpus& corpus, CanonicalShape shape, bool held_out) {
  corpus.descriptors.push_back(descriptor(shape));
  corpus.shapes.push_back(std::move(shape));
  corpus.held_out.push_back(held_out);
}

inline Corpus build_corpus(std::uint64_t seed, std::size_t count = kDefaultCorpusSize,
                           std::size_t hold_out_every = kDefaultHoldOutEvery) {
  if (count < kFamilyCount) throw ConfigError("build_corpus: need at least one shape per family");
  if (hold_out_every < 2) throw ConfigError("build_corpus: hold_out_every must be >= 2");
  Corpus corpus;
  corpus.seed = seed;
  for (std::size_t i = 0; i < count; ++i) {
    const ShapeFamily fam = kAllFamilies[i % kFamilyCount];
    add_shape(corpus, generate_shape(random_spec(fam, mix_seed(seed, 0xC0, i))),
              i % hold_out_every == 0);
  }
  return corpus;
}

/// <dir>/corpus.txt index plus one <dir>/shapes/<id>/ directory per shape.
/// Returns the written files relative to `dir`.
inline std::vector<std::filesystem::path> write_corpus(const std::filesystem::path& dir,
                                                       const Corpus& corpus) {
  io::KeyValues index;
  index.set("seed", corpus.seed);
  index.set("count", static_cast<std::uint64_t>(corpus.size()));
  std::vector<std::filesystem::path> files;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const std::string id = "shape." + std::to_string(i);
    index.set(id + ".family", std::string(family_name(corpus.family(i))));
    index.set(id + ".held_out", corpus.held_out[i] ? 1 : 0);
    const std::filesystem::path rel = std::filesystem::path("shapes") / std::to_string(i);
    export_shape(dir / rel, corpus.shapes[i]);
    files.push_back(rel / "meta.txt");
    files.push_back(rel / "points.bin");
  }
  index.save(dir / "corpus.txt");
  files.insert(files.begin(), "corpus.txt");
  return files;
}

/// Rebuilds shapes from their stored specs; the generator is deterministic so
/// geometry matches what was written.
inline Corpus load_corpus(const std::filesystem::path& dir) {
  const io::KeyValues index = io::KeyValues::load(dir / "corpus.txt");
  Corpus corpus;
  corpus.seed = index.get_u64("seed");
  const auto count = static_cast<std::size_t>(index.get_u64("count"));
  for (std::size_t i = 0; i < count; ++i) {
    const auto meta =
        io::KeyValues::load(dir / "shapes" / std::to_string(i) / "meta.txt");
    add_shape(corpus, generate_shape(parse_spec(meta)),
              index.get_int("shape." + std::to_string(i) + ".held_out") != 0);
  }
  return corpus;
}

}  // namespace jrm
