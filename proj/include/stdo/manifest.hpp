#pragma once

// Run manifests: ordered key=value text files written next to every CLI output.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stdo/error.hpp"

namespace stdo {

inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return s;
}

class RunManifest {
 public:
  void set(const std::string& key, const std::string& value) {
    if (key.empty() || key.find_first_of("=\n") != std::string::npos)
      throw ShapeError("manifest: bad key '" + key + "'");
    if (value.find('\n') != std::string::npos) throw ShapeError("manifest: newline in value");
    for (auto& kv : entries_) {
      if (kv.first == key) {
        kv.second = value;
        return;
      }
    }
    entries_.emplace_back(key, value);
  }

  const std::string* get(const std::string& key) const {
    for (const auto& kv : entries_)
      if (kv.first == key) return &kv.second;
    return nullptr;
  }

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string text() const {
    std::string s;
    for (const auto& [k, v] : entries_) s += k + "=" + v + "\n";
    return s;
  }

  void write(const std::filesystem::path& p) const {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot write " + p.string());
    out << text();
    if (!out) throw IoError("write failed for " + p.string());
  }

  static RunManifest parse(const std::string& text) {
    RunManifest m;
    std::size_t pos = 0, line = 0;
    while (pos < text.size()) {
      std::size_t end = text.find('\n', pos);
      if (end == std::string::npos) end = text.size();
      std::string row = text.substr(pos, end - pos);
      pos = end + 1;
      ++line;
      if (!row.empty() && row.back() == '\r') row.pop_back();
      if (row.empty() || row[0] == '#') continue;
      const auto eq = row.find('=');
      if (eq == std::string::npos || eq == 0)
        throw FormatError("manifest line " + std::to_string(line) + ": expected key=value");
      m.set(row.substr(0, eq), row.substr(eq + 1));
    }
    return m;
  }

  static RunManifest read(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return parse(text);
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace stdo
