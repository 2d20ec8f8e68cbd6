#pragma once

// Output plumbing: locale-independent number formatting, CSV tables, JSON
// summaries and the per-run manifest.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tbrw/error.hpp"
#include "tbrw/format.hpp"

namespace tbrw {

using Json = nlohmann::ordered_json;

/// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a(std::string_view text) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = kDigits[v & 0xF];
  return s;
}

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  class Row {
   public:
    Row& operator<<(double x) { return push(format_double(x)); }
    Row& operator<<(std::uint64_t x) { return push(std::to_string(x)); }
    Row& operator<<(std::int64_t x) { return push(std::to_string(x)); }
    Row& operator<<(std::uint32_t x) { return push(std::to_string(x)); }
    Row& operator<<(int x) { return push(std::to_string(x)); }
    Row& operator<<(bool x) { return push(x ? "1" : "0"); }
    Row& operator<<(const std::string& s) { return push(s); }
    Row& operator<<(const char* s) { return push(s); }

   private:
    friend class CsvTable;
    explicit Row(std::vector<std::string>& cells) : cells_(&cells) {}
    Row& push(std::string s) {
      cells_->push_back(std::move(s));
      return *this;
    }
    std::vector<std::string>* cells_;
  };

  Row row() {
    rows_.emplace_back();
    return Row(rows_.back());
  }

  const std::vector<std::string>& header() const noexcept { return header_; }
  const std::vector<std::vector<std::string>>& rows() const noexcept { return rows_; }

  std::string str() const {
    std::string out;
    auto line = [&out](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += cells[i];
      }
      out += '\n';
    };
    line(header_);
    for (const auto& r : rows_) {
      if (r.size() != header_.size()) throw Error("csv: row width differs from header");
      line(r);
    }
    return out;
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

inline void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error("write failed for " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

/// Collects the files of one run and writes manifest.json at the end.
class OutputSet {
 public:
  explicit OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {}

  const std::filesystem::path& dir() const noexcept { return dir_; }

  void write(const std::string& name, std::string_view text) {
    write_text_file(dir_ / name, text);
    artifacts_.push_back(name);
  }

  void write_csv(const std::string& name, const CsvTable& table) { write(name, table.str()); }
  void write_json(const std::string& name, const Json& j) { write(name, j.dump(2) + "\n"); }

  void finish(const std::string& kind, std::uint64_t config_hash) {
    Json manifest;
    manifest["kind"] = kind;
    manifest["config_hash"] = hex64(config_hash);
    manifest["artifacts"] = artifacts_;
    write_text_file(dir_ / "manifest.json", manifest.dump(2) + "\n");
  }

  const std::vector<std::string>& artifacts() const noexcept { return artifacts_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> artifacts_;
};

}  // namespace tbrw
