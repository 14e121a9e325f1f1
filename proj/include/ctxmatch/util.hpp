#pragma once

// Small shared helpers: error type, string utilities, file IO, FNV hashing.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ctxmatch {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

template <typename... Args>
[[noreturn]] inline void fail(Args&&... parts) {
  std::ostringstream os;
  (os << ... << parts);
  throw Error(os.str());
}

inline std::string trim(std::string_view s) {
  const char* ws = " \t\r\n\f\v";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

// Splits on a delimiter; if max_fields > 0, the last field keeps any
// remaining delimiters verbatim.
inline std::vector<std::string> split(std::string_view s, char delim,
                                      std::size_t max_fields = 0) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    if (max_fields > 0 && out.size() + 1 == max_fields) {
      out.emplace_back(s.substr(start));
      break;
    }
    auto pos = s.find(delim, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      break;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open file: ", path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write file: ", path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) fail("short write: ", path.string());
}

// Reads a text file into lines. Tolerates a trailing CR per line; the
// on-disk formats this project writes are always LF.
inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open file: ", path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

// FNV-1a, 64-bit. Used for content hashes (stage inputs, context audit ids).
class Fnv1a {
 public:
  Fnv1a& update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      state_ ^= c;
      state_ *= 1099511628211ull;
    }
    return *this;
  }
  Fnv1a& update(std::uint64_t v) { return update(std::to_string(v)).update("|"); }
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 14695981039346656037ull;
};

inline std::uint64_t fnv1a64(std::string_view bytes) {
  return Fnv1a().update(bytes).digest();
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

}  // namespace ctxmatch
