#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "jrm/common.hpp"

namespace jrm::io {

namespace fs = std::filesystem;

inline void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f32(std::string& buf, float f) { put_u32(buf, std::bit_cast<std::uint32_t>(f)); }

inline std::uint32_t get_u32(const std::string& buf, std::size_t& pos) {
  if (pos + 4 > buf.size()) throw IoError("truncated binary record");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
  pos += 4;
  return v;
}

inline std::uint64_t get_u64(const std::string& buf, std::size_t& pos) {
  const std::uint64_t lo = get_u32(buf, pos);
  const std::uint64_t hi = get_u32(buf, pos);
  return lo | (hi << 32);
}

inline float get_f32(const std::string& buf, std::size_t& pos) {
  return std::bit_cast<float>(get_u32(buf, pos));
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

/// Point rows: u32 row count, then count rows of 6 little-endian f32
/// (x y z nx ny nz).
inline std::string encode_point_rows(const PointSet& set) {
  std::string buf;
  buf.reserve(4 + set.size() * 24);
  put_u32(buf, static_cast<std::uint32_t>(set.size()));
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (int k = 0; k < 3; ++k) put_f32(buf, static_cast<float>(set.points[i][k]));
    for (int k = 0; k < 3; ++k) put_f32(buf, static_cast<float>(set.normals[i][k]));
  }
  return buf;
}

inline PointSet decode_point_rows(const std::string& buf) {
  std::size_t pos = 0;
  const std::uint32_t n = get_u32(buf, pos);
  if (buf.size() != 4 + static_cast<std::size_t>(n) * 24)
    throw IoError("point file length does not match its row count");
  PointSet set;
  set.points.reserve(n);
  set.normals.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    Vec3 p, q;
    for (int k = 0; k < 3; ++k) p[k] = get_f32(buf, pos);
    for (int k = 0; k < 3; ++k) q[k] = get_f32(buf, pos);
    set.push_back(p, q);
  }
  return set;
}

inline void write_point_rows(const fs::path& path, const PointSet& set) {
  write_file(path, encode_point_rows(set));
}

inline PointSet read_point_rows(const fs::path& path) {
  return decode_point_rows(read_file(path));
}

/// FNV-1a 64-bit.
inline std::uint64_t fnv1a(std::string_view bytes,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

/// Shortest decimal that parses back to exactly `v`.
inline std::string fmt_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

/// Ordered flat key-value record, one `key = value` per line. `#` starts a
/// comment. Keys keep insertion order so serialization is byte-stable.
class KeyValues {
 public:
  void set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries_)
      if (k == key) {
        v = value;
        return;
      }
    entries_.emplace_back(key, value);
  }
  void set(const std::string& key, double value) { set(key, fmt_double(value)); }
  void set(const std::string& key, std::int64_t value) { set(key, std::to_string(value)); }
  void set(const std::string& key, std::uint64_t value) { set(key, std::to_string(value)); }
  void set(const std::string& key, int value) { set(key, std::to_string(value)); }

  [[nodiscard]] bool has(const std::string& key) const {
    for (const auto& [k, v] : entries_)
      if (k == key) return true;
    return false;
  }

  [[nodiscard]] const std::string& get(const std::string& key) const {
    for (const auto& [k, v] : entries_)
      if (k == key) return v;
    throw ConfigError("missing key '" + key + "'");
  }

  [[nodiscard]] std::string get_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? get(key) : fallback;
  }

  [[nodiscard]] double get_double(const std::string& key) const {
    const std::string& v = get(key);
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "' is not a number: " + v);
    }
  }

  [[nodiscard]] std::int64_t get_int(const std::string& key) const {
    const std::string& v = get(key);
    try {
      std::size_t used = 0;
      const long long i = std::stoll(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return i;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "' is not an integer: " + v);
    }
  }

  [[nodiscard]] std::uint64_t get_u64(const std::string& key) const {
    const std::string& v = get(key);
    try {
      std::size_t used = 0;
      const unsigned long long i = std::stoull(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return i;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "' is not an unsigned integer: " + v);
    }
  }

  [[nodiscard]] const std::vector<std::pair<std::string, std::string>>& entries() const {
    return entries_;
  }

  [[nodiscard]] std::string serialize() const {
    std::string out;
    for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
    return out;
  }

  static KeyValues parse(const std::string& text) {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        if (trim(line).empty()) continue;
        throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
      }
      const std::string key = trim(line.substr(0, eq));
      if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
      kv.set(key, trim(line.substr(eq + 1)));
    }
    return kv;
  }

  static KeyValues load(const fs::path& path) { return parse(read_file(path)); }
  void save(const fs::path& path) const { write_file(path, serialize()); }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace jrm::io
