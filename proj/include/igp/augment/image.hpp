#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>

#include "igp/error.hpp"
#include "igp/numcore/linalg.hpp"

namespace igp::augment {

struct ImageShape {
  Eigen::Index height = 0;
  Eigen::Index width = 0;

  Eigen::Index pixels() const { return height * width; }
  bool valid() const { return height > 0 && width > 0; }
  bool operator==(const ImageShape &) const = default;
};

/// Greyscale image, row-major pixels. Normalised coordinates span [-1, 1]^2
/// with pixel centres at the extremes (pixel j <-> x = -1 + 2j/(W-1)).
struct Image {
  ImageShape shape;
  Vector pixels;

  Image() = default;
  Image(ImageShape s, Vector p) : shape(s), pixels(std::move(p)) {
    if (pixels.size() != shape.pixels()) {
      fail(ErrorCode::ShapeMismatch, "image: " + std::to_string(pixels.size()) + " pixels for " +
                                         std::to_string(shape.height) + "x" + std::to_string(shape.width));
    }
  }
  static Image zeros(ImageShape s) { return Image(s, Vector::Zero(s.pixels())); }

  double at(Eigen::Index row, Eigen::Index col) const { return pixels[row * shape.width + col]; }
  double &at(Eigen::Index row, Eigen::Index col) { return pixels[row * shape.width + col]; }
};

inline double normalized_coord(Eigen::Index index, Eigen::Index extent) {
  return extent > 1 ? -1.0 + 2.0 * static_cast<double>(index) / static_cast<double>(extent - 1) : 0.0;
}

/// Pixel-space position of a normalised coordinate.
inline double pixel_coord(double normalized, Eigen::Index extent) {
  return extent > 1 ? 0.5 * (normalized + 1.0) * static_cast<double>(extent - 1) : 0.0;
}

/// Pixels per normalised unit.
inline double pixel_scale(Eigen::Index extent) {
  return extent > 1 ? 0.5 * static_cast<double>(extent - 1) : 0.0;
}

/// Normalised (x, y) of every output pixel, as two rows of length H*W.
inline Matrix base_grid(ImageShape s) {
  Matrix g(2, s.pixels());
  for (Eigen::Index i = 0; i < s.height; ++i) {
    for (Eigen::Index j = 0; j < s.width; ++j) {
      g(0, i * s.width + j) = normalized_coord(j, s.width);
      g(1, i * s.width + j) = normalized_coord(i, s.height);
    }
  }
  return g;
}

/// Binary greyscale PGM (P5), values clamped to [0,1] and scaled to 0..255.
inline void write_pgm(const std::string &path, const Image &img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot open '" + path + "' for writing");
  out << "P5\n" << img.shape.width << " " << img.shape.height << "\n255\n";
  for (Eigen::Index k = 0; k < img.pixels.size(); ++k) {
    const double v = std::clamp(img.pixels[k], 0.0, 1.0);
    out.put(static_cast<char>(static_cast<std::uint8_t>(std::lround(v * 255.0))));
  }
  if (!out) fail(ErrorCode::IoError, "failed writing '" + path + "'");
}

inline Image read_pgm(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open '" + path + "'");
  std::string magic;
  Eigen::Index w = 0, h = 0;
  int maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || maxval != 255) fail(ErrorCode::BadMagic, "'" + path + "' is not an 8-bit P5 PGM");
  in.get();
  Image img = Image::zeros({h, w});
  for (Eigen::Index k = 0; k < img.pixels.size(); ++k) {
    const int c = in.get();
    if (c == EOF) fail(ErrorCode::TruncatedFile, "'" + path + "' ends early");
    img.pixels[k] = static_cast<double>(c) / 255.0;
  }
  return img;
}

} // namespace igp::augment
