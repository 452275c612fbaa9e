#pragma once

#include <cmath>

#include "igp/error.hpp"
#include "igp/numcore/linalg.hpp"
#include "igp/numcore/special.hpp"

namespace igp::augment {

enum class AffineMode { full_affine, rotation_only };

/// 2x3 matrix for affine offsets phi: [[1+p1, p2, p3], [p4, 1+p5, p6]].
/// Maps output normalised coordinates to input coordinates; phi = 0 is identity.
inline Matrix affine_matrix(const RowVector &phi) {
  if (phi.size() != 6) fail(ErrorCode::DimensionMismatch, "affine_matrix: expected 6 offsets");
  Matrix m(2, 3);
  m << 1.0 + phi[0], phi[1], phi[2], phi[3], 1.0 + phi[4], phi[5];
  return m;
}

inline Matrix rotation_matrix(double angle) {
  Matrix m(2, 3);
  m << std::cos(angle), -std::sin(angle), 0.0, std::sin(angle), std::cos(angle), 0.0;
  return m;
}

/// Uniform box over transformation parameters: [centre - hw, centre + hw] with
/// hw = softplus(halfwidth_raw), so the lower bound never exceeds the upper.
/// In rotation_only mode both vectors have one entry, an angle in radians.
struct AffineBounds {
  RowVector centre = RowVector::Zero(6);
  RowVector halfwidth_raw = RowVector::Constant(6, -30.0);
  AffineMode mode = AffineMode::full_affine;

  Eigen::Index dims() const { return mode == AffineMode::full_affine ? 6 : 1; }

  RowVector halfwidth() const { return halfwidth_raw.unaryExpr([](double x) { return softplus(x); }); }
  RowVector lower() const { return centre - halfwidth(); }
  RowVector upper() const { return centre + halfwidth(); }

  static AffineBounds rotation(double max_angle, double centre_angle = 0.0) {
    AffineBounds b;
    b.mode = AffineMode::rotation_only;
    b.centre = RowVector::Constant(1, centre_angle);
    b.halfwidth_raw = RowVector::Constant(1, softplus_inverse(max_angle));
    return b;
  }
};

/// Reparameterised draw: phi = lower + u * (upper - lower), u in [0,1]^k.
inline RowVector sample_params(const AffineBounds &bounds, const RowVector &u) {
  if (u.size() != bounds.dims()) fail(ErrorCode::DimensionMismatch, "sample_params: noise size mismatch");
  return bounds.lower() + u.cwiseProduct(bounds.upper() - bounds.lower());
}

/// Transformation matrix for a parameter draw in either mode.
inline Matrix transform_matrix(AffineMode mode, const RowVector &phi) {
  return mode == AffineMode::full_affine ? affine_matrix(phi) : rotation_matrix(phi[0]);
}

} // namespace igp::augment
