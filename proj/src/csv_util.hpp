#pragma once

// CSV helpers shared by the file readers; not part of the public API.

#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "urbanflux/errors.hpp"

namespace urbanflux::detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Splits exactly `N` comma-separated fields; false on any other count.
template <std::size_t N>
inline bool split_fields(std::string_view line, std::array<std::string_view, N>& out) {
  std::size_t field = 0;
  while (true) {
    const std::size_t comma = line.find(',');
    if (field >= N) return false;
    out[field++] = trim(line.substr(0, comma));
    if (comma == std::string_view::npos) break;
    line.remove_prefix(comma + 1);
  }
  return field == N;
}

template <typename T>
inline bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

class CsvReader {
 public:
  CsvReader(const std::filesystem::path& path, std::string_view expected_header)
      : in_(path), path_(path) {
    if (!in_) throw IoError("cannot open " + path.string());
    std::string header;
    if (!std::getline(in_, header)) throw ParseError(1, "missing header in " + path.string());
    std::string_view h = trim(header);
    if (h.size() >= 3 && static_cast<unsigned char>(h[0]) == 0xEF) h.remove_prefix(3);  // UTF-8 BOM
    if (h != expected_header) {
      throw ParseError(1, "expected header '" + std::string(expected_header) + "', got '" +
                              std::string(h) + "'");
    }
    line_no_ = 1;
  }

  // Next non-blank line; false at end of file.
  bool next(std::string_view& line) {
    while (std::getline(in_, buf_)) {
      ++line_no_;
      line = trim(buf_);
      if (!line.empty()) return true;
    }
    return false;
  }

  std::size_t line_no() const { return line_no_; }

 private:
  std::ifstream in_;
  std::filesystem::path path_;
  std::string buf_;
  std::size_t line_no_ = 0;
};


inline std::vector<std::string_view> split_all(std::string_view line) {
  std::vector<std::string_view> out;
  while (true) {
    const std::size_t comma = line.find(',');
    out.push_back(trim(line.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    line.remove_prefix(comma + 1);
  }
  return out;
}

}  // namespace urbanflux::detail
