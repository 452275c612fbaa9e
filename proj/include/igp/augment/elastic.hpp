#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "igp/augment/image.hpp"
#include "igp/augment/warp.hpp"

namespace igp::augment {

/// Displacement field = amplitude * smoothed unit-variance noise (pixels).
struct ElasticParams {
  double amplitude = 0.0;
  double smoothness = 3.0;
};

inline std::vector<double> gaussian_taps(double sigma, Eigen::Index radius) {
  std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (Eigen::Index k = -radius; k <= radius; ++k) {
    const double v = std::exp(-0.5 * static_cast<double>(k * k) / (sigma * sigma));
    taps[static_cast<std::size_t>(k + radius)] = v;
    total += v;
  }
  for (auto &v : taps) v /= total;
  return taps;
}

/// Separable Gaussian filter of one H x W channel (zero padding), rescaled so
/// filtered white noise has unit variance away from the border.
inline Vector smooth_field(const Vector &channel, ImageShape s, double sigma) {
  const Eigen::Index radius =
      std::min<Eigen::Index>(static_cast<Eigen::Index>(std::ceil(4.0 * sigma)), std::max(s.height, s.width));
  const auto taps = gaussian_taps(sigma, radius);
  double energy = 0.0;
  for (double v : taps) energy += v * v;
  Vector tmp = Vector::Zero(s.pixels());
  for (Eigen::Index i = 0; i < s.height; ++i) {
    for (Eigen::Index j = 0; j < s.width; ++j) {
      double acc = 0.0;
      for (Eigen::Index k = -radius; k <= radius; ++k) {
        const Eigen::Index jj = j + k;
        if (jj >= 0 && jj < s.width) acc += taps[static_cast<std::size_t>(k + radius)] * channel[i * s.width + jj];
      }
      tmp[i * s.width + j] = acc;
    }
  }
  Vector out = Vector::Zero(s.pixels());
  for (Eigen::Index i = 0; i < s.height; ++i) {
    for (Eigen::Index j = 0; j < s.width; ++j) {
      double acc = 0.0;
      for (Eigen::Index k = -radius; k <= radius; ++k) {
        const Eigen::Index ii = i + k;
        if (ii >= 0 && ii < s.height) acc += taps[static_cast<std::size_t>(k + radius)] * tmp[ii * s.width + j];
      }
      out[i * s.width + j] = acc;
    }
  }
  // Each pass scales white-noise std by sqrt(sum g^2); two passes give sum g^2.
  return out / energy;
}

/// Unit-amplitude displacement in normalised coordinates for a 2*H*W noise
/// vector (x channel then y channel). Layout matches bilinear_warp coords.
inline RowVector unit_displacement(const Vector &noise, ImageShape s, double smoothness) {
  const Eigen::Index D = s.pixels();
  if (noise.size() != 2 * D) fail(ErrorCode::ShapeMismatch, "elastic: noise must have 2*H*W entries");
  RowVector out(2 * D);
  const double sx = pixel_scale(s.width), sy = pixel_scale(s.height);
  out.head(D) = smooth_field(noise.head(D), s, smoothness).transpose() / (sx > 0 ? sx : 1.0);
  out.tail(D) = smooth_field(noise.tail(D), s, smoothness).transpose() / (sy > 0 ? sy : 1.0);
  return out;
}

/// Displacement field in pixels, (2 x H*W): row 0 horizontal, row 1 vertical.
inline Matrix displacement_field(const ElasticParams &p, const Vector &noise, ImageShape s) {
  const Eigen::Index D = s.pixels();
  if (noise.size() != 2 * D) fail(ErrorCode::ShapeMismatch, "elastic: noise must have 2*H*W entries");
  Matrix field(2, D);
  field.row(0) = p.amplitude * smooth_field(noise.head(D), s, p.smoothness).transpose();
  field.row(1) = p.amplitude * smooth_field(noise.tail(D), s, p.smoothness).transpose();
  return field;
}

inline Image elastic_warp(const Image &img, const ElasticParams &p, const Vector &noise) {
  const Matrix field = displacement_field(p, noise, img.shape);
  Matrix coords = base_grid(img.shape);
  const double sx = pixel_scale(img.shape.width), sy = pixel_scale(img.shape.height);
  coords.row(0) += field.row(0) / (sx > 0 ? sx : 1.0);
  coords.row(1) += field.row(1) / (sy > 0 ? sy : 1.0);
  return sample_at(img, coords);
}

} // namespace igp::augment
