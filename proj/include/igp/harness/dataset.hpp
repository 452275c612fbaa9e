#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include <zlib.h>

#include "igp/augment/affine.hpp"
#include "igp/augment/warp.hpp"
#include "igp/numcore/rng.hpp"

namespace igp::harness {

struct Dataset {
  Matrix X;                       // N x D, values in [0, 1]
  std::vector<int> labels;        // class ids, or -1/+1 for binary tasks
  augment::ImageShape shape;      // {0, 0} for plain vectors
  std::string split = "train";
  std::string provenance;

  Eigen::Index size() const { return X.rows(); }
};

namespace detail {

inline std::uint32_t read_be32(const unsigned char *p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

/// Whole file contents; gzip input is inflated transparently.
inline std::vector<unsigned char> read_maybe_gzip(const std::string &path) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::IoError, "cannot open '" + path + "'");
  gzFile f = gzopen(path.c_str(), "rb");
  if (f == nullptr) fail(ErrorCode::IoError, "cannot open '" + path + "'");
  std::vector<unsigned char> out;
  unsigned char buf[1 << 16];
  int n = 0;
  while ((n = gzread(f, buf, sizeof(buf))) > 0) out.insert(out.end(), buf, buf + n);
  const bool failed = n < 0;
  gzclose(f);
  if (failed) fail(ErrorCode::IoError, "read error in '" + path + "'");
  return out;
}

inline void write_be32(std::ostream &os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  os.write(reinterpret_cast<const char *>(b), 4);
}

} // namespace detail

/// Parses an IDX image file (magic 0x00000803) and label file (0x00000801).
inline Dataset load_idx(const std::string &images_path, const std::string &labels_path, std::string split = "train") {
  const auto img = detail::read_maybe_gzip(images_path);
  const auto lab = detail::read_maybe_gzip(labels_path);
  if (img.size() < 16) fail(ErrorCode::TruncatedFile, images_path + ": header truncated");
  if (lab.size() < 8) fail(ErrorCode::TruncatedFile, labels_path + ": header truncated");
  if (detail::read_be32(img.data()) != 0x00000803u) fail(ErrorCode::BadMagic, images_path + ": not an IDX image file");
  if (detail::read_be32(lab.data()) != 0x00000801u) fail(ErrorCode::BadMagic, labels_path + ": not an IDX label file");
  const std::uint64_t n = detail::read_be32(img.data() + 4);
  const std::uint64_t rows = detail::read_be32(img.data() + 8);
  const std::uint64_t cols = detail::read_be32(img.data() + 12);
  const std::uint64_t nl = detail::read_be32(lab.data() + 4);
  if (img.size() < 16 + n * rows * cols) fail(ErrorCode::TruncatedFile, images_path + ": pixel data truncated");
  if (lab.size() < 8 + nl) fail(ErrorCode::TruncatedFile, labels_path + ": label data truncated");
  if (n != nl) {
    fail(ErrorCode::CountMismatch, std::to_string(n) + " images but " + std::to_string(nl) + " labels");
  }
  Dataset ds;
  ds.shape = {static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
  const Eigen::Index D = ds.shape.pixels();
  ds.X.resize(static_cast<Eigen::Index>(n), D);
  const unsigned char *px = img.data() + 16;
  for (Eigen::Index i = 0; i < ds.X.rows(); ++i) {
    for (Eigen::Index j = 0; j < D; ++j) ds.X(i, j) = px[i * D + j] / 255.0;
  }
  ds.labels.assign(lab.begin() + 8, lab.begin() + 8 + static_cast<std::ptrdiff_t>(nl));
  ds.split = std::move(split);
  ds.provenance = "idx:" + images_path + "," + labels_path;
  return ds;
}

/// Writes uncompressed IDX files; pixels are rounded to bytes.
inline void write_idx(const Dataset &ds, const std::string &images_path, const std::string &labels_path) {
  if (!ds.shape.valid() || ds.shape.pixels() != ds.X.cols()) {
    fail(ErrorCode::ShapeMismatch, "write_idx: dataset is not image-shaped");
  }
  std::ofstream img(images_path, std::ios::binary), lab(labels_path, std::ios::binary);
  if (!img || !lab) fail(ErrorCode::IoError, "cannot write IDX files next to '" + images_path + "'");
  detail::write_be32(img, 0x00000803u);
  detail::write_be32(img, static_cast<std::uint32_t>(ds.X.rows()));
  detail::write_be32(img, static_cast<std::uint32_t>(ds.shape.height));
  detail::write_be32(img, static_cast<std::uint32_t>(ds.shape.width));
  std::vector<unsigned char> bytes(static_cast<std::size_t>(ds.X.size()));
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < ds.X.rows(); ++i)
    for (Eigen::Index j = 0; j < ds.X.cols(); ++j)
      bytes[k++] = static_cast<unsigned char>(std::lround(std::clamp(ds.X(i, j), 0.0, 1.0) * 255.0));
  img.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  detail::write_be32(lab, 0x00000801u);
  detail::write_be32(lab, static_cast<std::uint32_t>(ds.labels.size()));
  for (int l : ds.labels) lab.put(static_cast<char>(l));
}

/// Standard MNIST file names under a directory; gzip variants are accepted.
inline Dataset load_mnist(const std::string &dir, const std::string &split) {
  const std::string stem = split == "test" ? "t10k" : "train";
  auto pick = [&](const std::string &name) {
    const auto plain = std::filesystem::path(dir) / name;
    if (std::filesystem::exists(plain)) return plain.string();
    const auto gz = std::filesystem::path(dir) / (name + ".gz");
    if (std::filesystem::exists(gz)) return gz.string();
    fail(ErrorCode::IoError, "missing " + plain.string() + " (set IGP_DATA_ROOT or run tools/fetch_mnist.sh)");
  };
  return load_idx(pick(stem + "-images-idx3-ubyte"), pick(stem + "-labels-idx1-ubyte"), split);
}

/// Each image rotated by an angle drawn uniformly from [-alpha, alpha]
/// degrees. Angles (degrees) are returned in draw order.
struct RotatedDataset {
  Dataset data;
  std::vector<double> angles_deg;
};

inline RotatedDataset make_rotated(const Dataset &ds, double alpha_deg, std::uint64_t seed) {
  if (!ds.shape.valid() || ds.shape.pixels() != ds.X.cols()) {
    fail(ErrorCode::ShapeMismatch, "make_rotated: dataset is not image-shaped");
  }
  RotatedDataset out{ds, {}};
  RngStream stream(seed, {"rotate"});
  for (Eigen::Index i = 0; i < ds.X.rows(); ++i) {
    const double angle = alpha_deg * (2.0 * stream.uniform() - 1.0);
    out.angles_deg.push_back(angle);
    if (alpha_deg == 0.0) continue;
    const augment::Image img(ds.shape, ds.X.row(i).transpose());
    out.data.X.row(i) =
        augment::warp(img, augment::rotation_matrix(angle * std::numbers::pi / 180.0)).pixels.transpose();
  }
  out.data.provenance = ds.provenance + ";rotated alpha_true=" + std::to_string(alpha_deg) +
                        " seed=" + std::to_string(seed);
  return out;
}

/// First n rows (all when n <= 0 or n exceeds the size).
inline Dataset head(const Dataset &ds, Eigen::Index n) {
  if (n <= 0 || n >= ds.size()) return ds;
  Dataset out = ds;
  out.X = ds.X.topRows(n);
  out.labels.resize(static_cast<std::size_t>(n));
  out.provenance += ";first " + std::to_string(n);
  return out;
}

/// Relabels digits as +1 (odd) / -1 (even).
inline Dataset odd_even(const Dataset &ds) {
  Dataset out = ds;
  for (int &l : out.labels) l = (l % 2 == 1) ? 1 : -1;
  out.provenance += ";odd=+1 even=-1";
  return out;
}

/// One-hot targets (N x classes).
inline Matrix one_hot(const std::vector<int> &labels, Eigen::Index classes) {
  Matrix Y = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) fail(ErrorCode::ShapeMismatch, "label out of range for one-hot targets");
    Y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return Y;
}

inline Vector signed_labels(const std::vector<int> &labels) {
  Vector y(static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 1 && labels[i] != -1) fail(ErrorCode::ShapeMismatch, "binary labels must be -1 or +1");
    y[static_cast<Eigen::Index>(i)] = labels[i];
  }
  return y;
}

/// Symmetric toy regression: f(a, b) = f(b, a), observed on the half a > b.
/// The test set is the mirror image of a fresh draw, i.e. the unseen half.
struct ToyProblem {
  Matrix X_train;
  Vector y_train;
  Matrix X_test;
  Vector f_test;
};

inline double toy_function(double a, double b) {
  return std::sin(1.2 * a) * std::sin(1.2 * b) + 0.3 * (a + b);
}

inline ToyProblem make_toy(Eigen::Index n_train, Eigen::Index n_test, double noise_sd, std::uint64_t seed) {
  RngStream stream(seed, {"toy"});
  auto half = [&stream](Eigen::Index n) {
    Matrix X(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      double a = 6.0 * stream.uniform() - 3.0, b = 6.0 * stream.uniform() - 3.0;
      if (a < b) std::swap(a, b);
      X.row(i) << a, b;
    }
    return X;
  };
  ToyProblem t;
  t.X_train = half(n_train);
  t.y_train.resize(n_train);
  for (Eigen::Index i = 0; i < n_train; ++i) {
    t.y_train[i] = toy_function(t.X_train(i, 0), t.X_train(i, 1)) + noise_sd * stream.normal();
  }
  const Matrix mirror = half(n_test);
  t.X_test.resize(n_test, 2);
  t.f_test.resize(n_test);
  for (Eigen::Index i = 0; i < n_test; ++i) {
    t.X_test.row(i) << mirror(i, 1), mirror(i, 0);
    t.f_test[i] = toy_function(t.X_test(i, 0), t.X_test(i, 1));
  }
  return t;
}

} // namespace igp::harness
