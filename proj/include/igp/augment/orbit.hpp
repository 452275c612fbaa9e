#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "igp/augment/affine.hpp"
#include "igp/augment/warp.hpp"

namespace igp::augment {

enum class OrbitKind { identity, coordinate_swap, rotation_grid, explicit_maps };

using InputMap = std::function<Vector(const Vector &)>;

/// Finite orbit A(x). `explicit_maps` lists the non-identity maps; the
/// identity is always element 0, so P = maps.size() + 1.
struct OrbitSpec {
  OrbitKind kind = OrbitKind::identity;
  Eigen::Index P = 1;
  std::vector<InputMap> maps;

  static OrbitSpec identity() { return {}; }
  static OrbitSpec coordinate_swap() { return {OrbitKind::coordinate_swap, 2, {}}; }
  static OrbitSpec rotation_grid(Eigen::Index P) {
    if (P < 1) fail(ErrorCode::UnsupportedShape, "rotation_grid: P must be >= 1");
    return {OrbitKind::rotation_grid, P, {}};
  }
  static OrbitSpec explicit_maps(std::vector<InputMap> maps) {
    const auto P = static_cast<Eigen::Index>(maps.size()) + 1;
    return {OrbitKind::explicit_maps, P, std::move(maps)};
  }
};

namespace detail {

inline double snap(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < 1e-12 ? r : v;
}

/// Rotates every consecutive coordinate pair of x about the origin.
inline Vector rotate_pairs(const Vector &x, double angle) {
  const double c = snap(std::cos(angle)), s = snap(std::sin(angle));
  Vector out(x.size());
  for (Eigen::Index i = 0; i + 1 < x.size(); i += 2) {
    out[i] = c * x[i] - s * x[i + 1];
    out[i + 1] = s * x[i] + c * x[i + 1];
  }
  return out;
}

inline Image rotate_image(const Image &img, double angle) {
  Matrix m(2, 3);
  m << snap(std::cos(angle)), -snap(std::sin(angle)), 0.0, snap(std::sin(angle)), snap(std::cos(angle)), 0.0;
  return warp(img, m);
}

} // namespace detail

/// The P orbit elements of x in a fixed order, element 0 being x itself.
/// rotation_grid rotates by 2*pi*k/P: images (when `shape` matches) about their
/// centre, plain vectors pairwise in the plane of each coordinate pair.
inline std::vector<Vector> orbit_points(const Vector &x, const OrbitSpec &spec, ImageShape shape = {}) {
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(spec.P));
  switch (spec.kind) {
  case OrbitKind::identity:
    out.push_back(x);
    break;
  case OrbitKind::coordinate_swap: {
    if (x.size() != 2) fail(ErrorCode::UnsupportedShape, "coordinate_swap needs 2-d inputs");
    out.push_back(x);
    Vector swapped(2);
    swapped << x[1], x[0];
    out.push_back(swapped);
    break;
  }
  case OrbitKind::rotation_grid: {
    const bool image = shape.valid() && x.size() == shape.pixels();
    if (!image && x.size() % 2 != 0) {
      fail(ErrorCode::UnsupportedShape, "rotation_grid needs an image shape or an even input dimension");
    }
    for (Eigen::Index k = 0; k < spec.P; ++k) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(spec.P);
      if (k == 0) {
        out.push_back(x);
      } else if (image) {
        out.push_back(detail::rotate_image(Image(shape, x), angle).pixels);
      } else {
        out.push_back(detail::rotate_pairs(x, angle));
      }
    }
    break;
  }
  case OrbitKind::explicit_maps:
    out.push_back(x);
    for (const auto &m : spec.maps) {
      Vector y = m(x);
      if (y.size() != x.size()) fail(ErrorCode::UnsupportedShape, "orbit map changed the input dimension");
      out.push_back(std::move(y));
    }
    break;
  }
  return out;
}

} // namespace igp::augment
