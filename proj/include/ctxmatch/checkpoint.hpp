#pragma once

// Parameter checkpoints. Binary format "CTXMCKP1", version-tagged by the
// magic itself:
//
//   magic   8 bytes  "CTXMCKP1"
//   count   u64      number of parameters
//   entry*  u32 name_len | name bytes | u32 ndim | u64 dim[ndim] | f64 data[]
//
// All integers and doubles are little-endian IEEE-754; round-trips are
// bit-exact. Entries are sorted by parameter name.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "ctxmatch/autodiff.hpp"
#include "ctxmatch/tensor.hpp"
#include "ctxmatch/util.hpp"

namespace ctxmatch {

namespace detail {

constexpr char kCheckpointMagic[9] = "CTXMCKP1";

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_f64(std::string& out, double d) {
  put_u64(out, std::bit_cast<std::uint64_t>(d));
}

class ByteReader {
 public:
  ByteReader(const std::string& bytes, std::string origin)
      : bytes_(bytes), origin_(std::move(origin)) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i)
      v = (v << 8) | static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(i)]);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i)
      v = (v << 8) | static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(i)]);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) {
    if (pos_ + n > bytes_.size()) fail("checkpoint truncated: ", origin_);
  }
  const std::string& bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline void save_checkpoint(const ParamStore& params, const std::filesystem::path& path) {
  std::string out;
  out.append(detail::kCheckpointMagic, 8);
  detail::put_u64(out, params.entries().size());
  for (const auto& [name, p] : params.entries()) {
    if (!p->value.all_finite()) fail("checkpoint: non-finite values in param '", name, "'");
    detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    detail::put_u32(out, static_cast<std::uint32_t>(p->value.shape().size()));
    for (auto d : p->value.shape()) detail::put_u64(out, d);
    for (double v : p->value.values()) detail::put_f64(out, v);
  }
  write_file(path, out);
}

inline std::map<std::string, Tensor> load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  detail::ByteReader reader(bytes, path.string());
  if (reader.str(8) != std::string(detail::kCheckpointMagic, 8))
    fail("checkpoint: bad magic in ", path.string());
  const std::uint64_t count = reader.u64();
  std::map<std::string, Tensor> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = reader.str(reader.u32());
    const std::uint32_t ndim = reader.u32();
    std::vector<std::size_t> shape;
    std::size_t total = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      shape.push_back(static_cast<std::size_t>(reader.u64()));
      total *= shape.back();
    }
    std::vector<double> data(total);
    for (auto& v : data) v = reader.f64();
    out.emplace(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (!reader.done()) fail("checkpoint: trailing bytes in ", path.string());
  return out;
}

// Assigns checkpoint values onto an already-built store; names and shapes
// must match exactly.
inline void restore_params(ParamStore& params, const std::filesystem::path& path) {
  auto loaded = load_checkpoint(path);
  if (loaded.size() != params.entries().size())
    fail("checkpoint ", path.string(), ": has ", loaded.size(), " params, model has ",
         params.entries().size());
  for (auto& [name, p] : params.entries()) {
    auto it = loaded.find(name);
    if (it == loaded.end()) fail("checkpoint ", path.string(), ": missing param '", name, "'");
    if (it->second.shape() != p->value.shape())
      fail("checkpoint ", path.string(), ": shape mismatch for '", name, "': ",
           it->second.shape_string(), " vs ", p->value.shape_string());
    p->value = std::move(it->second);
  }
}

}  // namespace ctxmatch
