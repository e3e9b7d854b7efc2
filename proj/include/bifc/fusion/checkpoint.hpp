#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "bifc/diffcore/tape.hpp"

// Layout: "BIFCNET\0", u32 version, u32 entry count, then per entry
// u32 name length, name bytes, u32 rank, rank x u64 dims; then every
// entry's values as little-endian doubles in table order.

namespace bifc {

inline constexpr char kCheckpointMagic[8] = {'B', 'I', 'F', 'C', 'N', 'E', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(std::vector<char> bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  template <class T>
  T get(const char* what) {
    if (bytes_.size() - pos_ < sizeof(T)) fail(std::string("truncated while reading ") + what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string(std::size_t n) {
    if (bytes_.size() - pos_ < n) fail("truncated name");
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(path_ + ": offset " + std::to_string(pos_) + ": " + what);
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  std::vector<char> bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string checkpoint_bytes(const ParameterSet& params) {
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out += p->name;
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t d : p->value.shape()) detail::put<std::uint64_t>(out, d);
  }
  for (const Parameter* p : params) {
    for (double v : p->value.values()) detail::put<double>(out, v);
  }
  return out;
}

inline void save_checkpoint(const std::string& path, const ParameterSet& params) {
  const std::string bytes = checkpoint_bytes(params);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(path + ": cannot open for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(path + ": write failed");
}

/// Loads values into `params`; the stored name/shape table must match it
/// entry for entry. Nothing is modified unless the whole file is valid.
inline void load_checkpoint(const std::string& path, const ParameterSet& params) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(path + ": cannot open checkpoint");
  detail::Reader in({std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()}, path);
  char magic[8];
  for (char& c : magic) c = in.get<char>("magic");
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0) in.fail("bad magic, not a checkpoint");
  if (const auto v = in.get<std::uint32_t>("version"); v != kCheckpointVersion) {
    in.fail("unsupported version " + std::to_string(v));
  }
  const auto count = in.get<std::uint32_t>("entry count");
  if (count != params.size()) {
    in.fail("checkpoint has " + std::to_string(count) + " tensors, network expects " +
            std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < count; ++i) {
    const Parameter& p = params[i];
    const std::string name = in.get_string(in.get<std::uint32_t>("name length"));
    const auto rank = in.get<std::uint32_t>("rank");
    Shape shape(rank);
    for (auto& d : shape) d = in.get<std::uint64_t>("dimension");
    if (name != p.name || shape != p.value.shape()) {
      in.fail("shape table mismatch at entry " + std::to_string(i) + ": file has " + name + " " +
              shape_str(shape) + ", network has " + p.name + " " + shape_str(p.value.shape()));
    }
  }
  std::vector<Tensor> values;
  for (const Parameter* p : params) {
    Tensor t(p->value.shape());
    for (double& v : t.values()) v = in.get<double>("values");
    values.push_back(std::move(t));
  }
  if (!in.at_end()) in.fail("trailing bytes after the last tensor");
  params.restore(values);
}

}  // namespace bifc
