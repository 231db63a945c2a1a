#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "jrm/denoiser.hpp"
#include "jrm/io.hpp"

namespace jrm {

inline constexpr char kCheckpointMagic[8] = {'J', 'R', 'M', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Model, optimiser state and run metadata.
///
///   magic[8] u32 version
///   u32 len, metadata text (key = value lines; includes the model config)
///   u64 step
///   u32 tensor count, then per tensor: u32 name len, name, u32 rows, u32 cols
///   parameter blob (f32 LE, tensors in table order, row-major)
///   u64 adam step, first-moment blob, second-moment blob
struct Checkpoint {
  io::KeyValues metadata;
  std::uint64_t step = 0;
};

inline void save_checkpoint(const std::filesystem::path& path, const Denoiser<float>& model,
                            const AdamState<float>& adam, const Checkpoint& info) {
  std::string buf(kCheckpointMagic, sizeof kCheckpointMagic);
  io::put_u32(buf, kCheckpointVersion);
  io::KeyValues meta = model.config.to_kv();
  for (const auto& [k, v] : info.metadata.entries())
    if (!k.starts_with("model.")) meta.set(k, v);
  const std::string text = meta.serialize();
  io::put_u32(buf, static_cast<std::uint32_t>(text.size()));
  buf += text;
  io::put_u64(buf, info.step);
  io::put_u32(buf, static_cast<std::uint32_t>(model.params.size()));
  for (const auto& p : model.params) {
    io::put_u32(buf, static_cast<std::uint32_t>(p.name.size()));
    buf += p.name;
    io::put_u32(buf, static_cast<std::uint32_t>(p.value.rows()));
    io::put_u32(buf, static_cast<std::uint32_t>(p.value.cols()));
  }
  for (const auto& p : model.params)
    for (Eigen::Index i = 0; i < p.value.size(); ++i) io::put_f32(buf, p.value.data()[i]);
  const bool has_adam = adam.m.size() == model.params.size();
  io::put_u64(buf, has_adam ? adam.step : 0);
  for (std::size_t i = 0; i < model.params.size(); ++i)
    for (Eigen::Index j = 0; j < model.params[i].value.size(); ++j)
      io::put_f32(buf, has_adam ? adam.m[i].data()[j] : 0.0f);
  for (std::size_t i = 0; i < model.params.size(); ++i)
    for (Eigen::Index j = 0; j < model.params[i].value.size(); ++j)
      io::put_f32(buf, has_adam ? adam.v[i].data()[j] : 0.0f);
  // Write-then-rename so an interrupted save never clobbers the last good file.
  const std::filesystem::path tmp = path.string() + ".tmp";
  io::write_file(tmp, buf);
  std::filesystem::rename(tmp, path);
}

struct LoadedCheckpoint {
  Denoiser<float> model;
  AdamState<float> adam;
  Checkpoint info;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string buf = io::read_file(path);
  auto fail = [&](const std::string& why) -> IoError {
    return IoError("checkpoint " + path.string() + ": " + why);
  };
  if (buf.size() < sizeof kCheckpointMagic + 4 ||
      buf.compare(0, sizeof kCheckpointMagic, std::string(kCheckpointMagic, sizeof kCheckpointMagic)) != 0)
    throw fail("bad magic");
  std::size_t pos = sizeof kCheckpointMagic;
  try {
    const std::uint32_t version = io::get_u32(buf, pos);
    if (version != kCheckpointVersion) throw fail("unsupported version " + std::to_string(version));
    const std::uint32_t len = io::get_u32(buf, pos);
    if (pos + len > buf.size()) throw fail("truncated metadata");
    io::KeyValues meta = io::KeyValues::parse(buf.substr(pos, len));
    pos += len;
    LoadedCheckpoint out{Denoiser<float>(ModelConfig::from_kv(meta)), {}, {meta, 0}};
    out.info.step = io::get_u64(buf, pos);
    auto& params = out.model.params;
    if (io::get_u32(buf, pos) != params.size()) throw fail("tensor count does not match config");
    for (auto& p : params) {
      const std::uint32_t nlen = io::get_u32(buf, pos);
      if (pos + nlen > buf.size()) throw fail("truncated tensor table");
      const std::string name = buf.substr(pos, nlen);
      pos += nlen;
      const std::uint32_t rows = io::get_u32(buf, pos), cols = io::get_u32(buf, pos);
      if (name != p.name || rows != p.value.rows() || cols != p.value.cols())
        throw fail("tensor '" + name + "' does not match the model layout");
    }
    for (auto& p : params)
      for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = io::get_f32(buf, pos);
    out.adam.reset(params);
    out.adam.step = io::get_u64(buf, pos);
    for (auto& m : out.adam.m)
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = io::get_f32(buf, pos);
    for (auto& v : out.adam.v)
      for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = io::get_f32(buf, pos);
    if (pos != buf.size()) throw fail("trailing bytes");
    return out;
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    throw fail(e.what());
  }
}

}  // namespace jrm
