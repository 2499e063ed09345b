#pragma once

// Binary checkpoints, little-endian:
//
//   "PDSACKPT" | u32 layout_version | u32 set_count
//   per set:    u32 name_len | name | u64 version | u32 tensor_count
//   per tensor: u32 name_len | name | u32 rank | u64 dims[rank] | f64 payload[prod(dims)]

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "pdsac/approximator.hpp"
#include "pdsac/errors.hpp"

namespace pdsac {

inline constexpr char kCheckpointMagic[8] = {'P', 'D', 'S', 'A', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointLayoutVersion = 1;

struct NamedParams {
  std::string name;
  ParamSet params;

  bool operator==(const NamedParams&) const = default;
};

namespace detail {

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t max_len = 4096) {
    const std::uint32_t n = u32();
    if (n > max_len) throw CheckpointError(CheckpointError::Kind::corrupt, "checkpoint: implausible string length");
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  void expect(const char* p, std::size_t n) {
    need(n);
    if (std::memcmp(bytes_.data() + pos_, p, n) != 0)
      throw CheckpointError(CheckpointError::Kind::corrupt, "checkpoint: bad magic");
    pos_ += n;
  }
  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError(CheckpointError::Kind::corrupt, "checkpoint: truncated file");
  }

  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

inline std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::io, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointError::Kind::io, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(CheckpointError::Kind::io, "short write to " + path);
}

}  // namespace detail

inline std::vector<char> encode_checkpoint(const std::vector<NamedParams>& sets) {
  detail::ByteWriter w;
  w.raw(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointLayoutVersion);
  w.u32(static_cast<std::uint32_t>(sets.size()));
  for (const NamedParams& s : sets) {
    w.str(s.name);
    w.u64(s.params.version());
    w.u32(static_cast<std::uint32_t>(s.params.tensor_count()));
    for (const Tensor& t : s.params.tensors()) {
      w.str(t.name);
      w.u32(static_cast<std::uint32_t>(t.shape.size()));
      for (std::size_t d : t.shape) w.u64(d);
      for (double v : t.values) w.f64(v);
    }
  }
  return w.bytes();
}

inline std::vector<NamedParams> decode_checkpoint(std::vector<char> bytes) {
  using Kind = CheckpointError::Kind;
  detail::ByteReader r(std::move(bytes));
  r.expect(kCheckpointMagic, sizeof kCheckpointMagic);
  const std::uint32_t layout = r.u32();
  if (layout != kCheckpointLayoutVersion)
    throw CheckpointError(Kind::corrupt, "checkpoint: unsupported layout_version " + std::to_string(layout));
  const std::uint32_t count = r.u32();
  std::vector<NamedParams> sets;
  for (std::uint32_t si = 0; si < count; ++si) {
    NamedParams np;
    np.name = r.str();
    const std::uint64_t version = r.u64();
    const std::uint32_t tensors = r.u32();
    std::vector<Tensor> ts;
    for (std::uint32_t ti = 0; ti < tensors; ++ti) {
      Tensor t;
      t.name = r.str();
      const std::uint32_t rank = r.u32();
      if (rank > 8) throw CheckpointError(Kind::corrupt, "checkpoint: implausible tensor rank");
      std::uint64_t n = 1;
      for (std::uint32_t k = 0; k < rank; ++k) {
        const std::uint64_t d = r.u64();
        t.shape.push_back(static_cast<std::size_t>(d));
        n *= d;
      }
      if (n > r.remaining() / 8) throw CheckpointError(Kind::corrupt, "checkpoint: truncated payload");
      t.values.resize(static_cast<std::size_t>(n));
      for (double& v : t.values) v = r.f64();
      ts.push_back(std::move(t));
    }
    np.params = ParamSet(std::move(ts), version);
    sets.push_back(std::move(np));
  }
  if (!r.at_end()) throw CheckpointError(Kind::corrupt, "checkpoint: trailing bytes");
  return sets;
}

inline void save_checkpoint(const std::vector<NamedParams>& sets, const std::string& path) {
  detail::write_file(path, encode_checkpoint(sets));
}

inline std::vector<NamedParams> load_checkpoint(const std::string& path) {
  return decode_checkpoint(detail::read_file(path));
}

// Loads a checkpoint and verifies it matches an expected architecture
// set by set and tensor by tensor.
inline std::vector<NamedParams> load_checkpoint_matching(const std::string& path,
                                                         const std::vector<NamedParams>& expected) {
  std::vector<NamedParams> loaded = load_checkpoint(path);
  if (loaded.size() != expected.size())
    throw CheckpointError(CheckpointError::Kind::shape_mismatch, "checkpoint: network count differs");
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    if (loaded[i].name != expected[i].name || !loaded[i].params.same_shapes(expected[i].params))
      throw CheckpointError(CheckpointError::Kind::shape_mismatch,
                            "checkpoint: '" + loaded[i].name + "' does not match the current architecture");
  }
  return loaded;
}

inline const ParamSet& find_params(const std::vector<NamedParams>& sets, const std::string& name) {
  for (const NamedParams& s : sets)
    if (s.name == name) return s.params;
  throw CheckpointError(CheckpointError::Kind::shape_mismatch, "checkpoint has no '" + name + "' network");
}

}  // namespace pdsac
