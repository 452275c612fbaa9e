#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "igp/error.hpp"
#include "igp/numcore/linalg.hpp"

namespace igp::harness {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

/// Layout (all integers little-endian):
///   "IGP1" | u32 version | u64 step | u64 config length | config text | u64 count
///   count x { u32 name length | name | u32 rank | rank x u64 dims | f64 values, row-major }
struct Tensor {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> values;

  Matrix matrix() const;
  static Tensor from_matrix(std::string name, const Matrix &m);
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;
  std::uint64_t step = 0;
  std::string config_text;
  std::vector<Tensor> tensors;

  const Tensor *find(const std::string &name) const {
    for (const auto &t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
  const Tensor &at(const std::string &name) const {
    const Tensor *t = find(name);
    if (t == nullptr) fail(ErrorCode::BadCheckpoint, "checkpoint has no tensor '" + name + "'");
    return *t;
  }
};

inline Matrix Tensor::matrix() const {
  if (dims.size() > 2) fail(ErrorCode::BadCheckpoint, "tensor '" + name + "' has rank > 2");
  const auto rows = static_cast<Eigen::Index>(dims.empty() ? 1 : dims[0]);
  const auto cols = static_cast<Eigen::Index>(dims.size() < 2 ? 1 : dims[1]);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = values[static_cast<std::size_t>(i * cols + j)];
  return m;
}

inline Tensor Tensor::from_matrix(std::string name, const Matrix &m) {
  Tensor t{std::move(name), {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())}, {}};
  t.values.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) t.values.push_back(m(i, j));
  return t;
}

namespace detail {

template <typename T>
void put(std::string &out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
public:
  explicit Reader(const std::string &bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string text(std::uint64_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

private:
  void need(std::uint64_t n) const {
    if (bytes_.size() - pos_ < n) fail(ErrorCode::TruncatedFile, "checkpoint ends early");
  }

  const std::string &bytes_;
  std::size_t pos_ = 0;
};

} // namespace detail

inline std::string serialize(const Checkpoint &ck) {
  std::string out = "IGP1";
  detail::put<std::uint32_t>(out, ck.version);
  detail::put<std::uint64_t>(out, ck.step);
  detail::put<std::uint64_t>(out, ck.config_text.size());
  out += ck.config_text;
  detail::put<std::uint64_t>(out, ck.tensors.size());
  for (const auto &t : ck.tensors) {
    std::uint64_t n = 1;
    for (auto d : t.dims) n *= d;
    if (n != t.values.size()) fail(ErrorCode::BadCheckpoint, "tensor '" + t.name + "': dims disagree with values");
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) detail::put<std::uint64_t>(out, d);
    for (double v : t.values) detail::put<double>(out, v);
  }
  return out;
}

inline Checkpoint deserialize(const std::string &bytes) {
  if (bytes.size() < 4 || bytes.compare(0, 4, "IGP1") != 0) fail(ErrorCode::BadMagic, "not an IGP1 checkpoint");
  detail::Reader r(bytes);
  r.text(4);
  Checkpoint ck;
  ck.version = r.get<std::uint32_t>();
  if (ck.version != Checkpoint::kVersion) {
    fail(ErrorCode::BadCheckpoint, "unsupported checkpoint version " + std::to_string(ck.version));
  }
  ck.step = r.get<std::uint64_t>();
  ck.config_text = r.text(r.get<std::uint64_t>());
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    Tensor t;
    t.name = r.text(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    std::uint64_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      t.dims.push_back(r.get<std::uint64_t>());
      n *= t.dims.back();
    }
    if (n > bytes.size()) fail(ErrorCode::TruncatedFile, "checkpoint ends early");
    t.values.resize(n);
    for (auto &v : t.values) v = r.get<double>();
    ck.tensors.push_back(std::move(t));
  }
  if (!r.done()) fail(ErrorCode::BadCheckpoint, "trailing bytes after the last tensor");
  return ck;
}

inline void save_checkpoint(const std::string &path, const Checkpoint &ck) {
  const std::string bytes = serialize(ck);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) fail(ErrorCode::IoError, "cannot write '" + tmp + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::IoError, "failed writing '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

} // namespace igp::harness
