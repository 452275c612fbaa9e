#pragma once

#include <cmath>

#include "igp/augment/image.hpp"
#include "igp/autodiff/ops.hpp"

namespace igp::augment {

/// Bilinear read at pixel-space (col, row) with zero padding; also returns the
/// partial derivatives with respect to col and row.
struct BilinearTap {
  double value = 0.0;
  double d_col = 0.0;
  double d_row = 0.0;
};

template <typename Pixels>
BilinearTap bilinear_tap(const Pixels &img, ImageShape s, double col, double row) {
  const double c0f = std::floor(col);
  const double r0f = std::floor(row);
  const auto c0 = static_cast<Eigen::Index>(c0f);
  const auto r0 = static_cast<Eigen::Index>(r0f);
  const double fc = col - c0f;
  const double fr = row - r0f;
  auto px = [&](Eigen::Index r, Eigen::Index c) -> double {
    if (r < 0 || r >= s.height || c < 0 || c >= s.width) return 0.0;
    return img[r * s.width + c];
  };
  const double v00 = px(r0, c0), v01 = px(r0, c0 + 1), v10 = px(r0 + 1, c0), v11 = px(r0 + 1, c0 + 1);
  BilinearTap t;
  t.value = (1 - fr) * ((1 - fc) * v00 + fc * v01) + fr * ((1 - fc) * v10 + fc * v11);
  t.d_col = (1 - fr) * (v01 - v00) + fr * (v11 - v10);
  t.d_row = (1 - fc) * (v10 - v00) + fc * (v11 - v01);
  return t;
}

/// Adds `w` times the bilinear weights of (col, row) into `grad`.
template <typename Pixels>
void bilinear_scatter(Pixels &&grad, ImageShape s, double col, double row, double w) {
  const double c0f = std::floor(col);
  const double r0f = std::floor(row);
  const auto c0 = static_cast<Eigen::Index>(c0f);
  const auto r0 = static_cast<Eigen::Index>(r0f);
  const double fc = col - c0f;
  const double fr = row - r0f;
  auto put = [&](Eigen::Index r, Eigen::Index c, double v) {
    if (r < 0 || r >= s.height || c < 0 || c >= s.width) return;
    grad[r * s.width + c] += v;
  };
  put(r0, c0, w * (1 - fr) * (1 - fc));
  put(r0, c0 + 1, w * (1 - fr) * fc);
  put(r0 + 1, c0, w * fr * (1 - fc));
  put(r0 + 1, c0 + 1, w * fr * fc);
}

/// Resamples `img` at normalised source coordinates: coords row 0 holds x,
/// row 1 holds y, one column per output pixel.
inline Image sample_at(const Image &img, const Matrix &coords) {
  const ImageShape s = img.shape;
  Image out = Image::zeros(s);
  for (Eigen::Index p = 0; p < s.pixels(); ++p) {
    out.pixels[p] = bilinear_tap(img.pixels, s, pixel_coord(coords(0, p), s.width),
                                 pixel_coord(coords(1, p), s.height))
                        .value;
  }
  return out;
}

/// Affine warp: output pixel at normalised (x, y) reads the input at
/// matrix * (x, y, 1).
inline Image warp(const Image &img, const Matrix &matrix) {
  if (matrix.rows() != 2 || matrix.cols() != 3) fail(ErrorCode::DimensionMismatch, "warp: expected 2x3 matrix");
  const Matrix grid = base_grid(img.shape);
  Matrix coords = matrix.leftCols(2) * grid;
  coords.colwise() += matrix.col(2);
  return sample_at(img, coords);
}

} // namespace igp::augment

namespace igp::ad {

/// Batched bilinear resampling. `images` is (B x H*W); `coords` is
/// (B x 2*H*W) with normalised source x in the first H*W columns and y in the
/// rest. Differentiable in both inputs.
inline Var bilinear_warp(const Var &images, const Var &coords, augment::ImageShape shape) {
  const Eigen::Index D = shape.pixels();
  if (images.cols() != D || coords.cols() != 2 * D || coords.rows() != images.rows()) {
    fail(ErrorCode::DimensionMismatch, "bilinear_warp: shape mismatch");
  }
  const Matrix &X = images.value();
  const Matrix &C = coords.value();
  const Eigen::Index B = X.rows();
  Matrix out(B, D);
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto row = X.row(b);
    for (Eigen::Index p = 0; p < D; ++p) {
      out(b, p) = augment::bilinear_tap(row, shape, augment::pixel_coord(C(b, p), shape.width),
                                        augment::pixel_coord(C(b, D + p), shape.height))
                      .value;
    }
  }
  const auto ix = images.id(), ic = coords.id();
  return images.tape()->record(
      std::move(out), images.requires_grad() || coords.requires_grad(),
      [ix, ic, shape, D, B](Tape &t, const Matrix &up) {
        const Matrix &Xv = t.value(ix);
        const Matrix &Cv = t.value(ic);
        const double sx = augment::pixel_scale(shape.width);
        const double sy = augment::pixel_scale(shape.height);
        const bool want_x = t.requires_grad(ix);
        const bool want_c = t.requires_grad(ic);
        Matrix gx = want_x ? Matrix(Matrix::Zero(B, D)) : Matrix();
        Matrix gc = want_c ? Matrix(Matrix::Zero(B, 2 * D)) : Matrix();
        for (Eigen::Index b = 0; b < B; ++b) {
          const auto row = Xv.row(b);
          for (Eigen::Index p = 0; p < D; ++p) {
            const double col = augment::pixel_coord(Cv(b, p), shape.width);
            const double rw = augment::pixel_coord(Cv(b, D + p), shape.height);
            if (want_c) {
              const auto tap = augment::bilinear_tap(row, shape, col, rw);
              gc(b, p) = up(b, p) * tap.d_col * sx;
              gc(b, D + p) = up(b, p) * tap.d_row * sy;
            }
            if (want_x) augment::bilinear_scatter(gx.row(b), shape, col, rw, up(b, p));
          }
        }
        if (want_x) t.accumulate(ix, gx);
        if (want_c) t.accumulate(ic, gc);
      });
}

/// Sampling grid for per-row affine offsets Phi (B x 6):
/// x_s = (1+p1) x + p2 y + p3,  y_s = p4 x + (1+p5) y + p6.
inline Var affine_grid(const Var &phi, augment::ImageShape shape) {
  if (phi.cols() != 6) fail(ErrorCode::DimensionMismatch, "affine_grid: expected B x 6 offsets");
  const Matrix grid = augment::base_grid(shape);
  const Eigen::Index D = shape.pixels();
  const Eigen::Index B = phi.rows();
  const Matrix &P = phi.value();
  Matrix out(B, 2 * D);
  for (Eigen::Index b = 0; b < B; ++b) {
    out.row(b).head(D) = (1.0 + P(b, 0)) * grid.row(0) + P(b, 1) * grid.row(1);
    out.row(b).head(D).array() += P(b, 2);
    out.row(b).tail(D) = P(b, 3) * grid.row(0) + (1.0 + P(b, 4)) * grid.row(1);
    out.row(b).tail(D).array() += P(b, 5);
  }
  const auto ip = phi.id();
  return phi.tape()->record(std::move(out), phi.requires_grad(), [ip, grid, D, B](Tape &t, const Matrix &up) {
    Matrix g(B, 6);
    for (Eigen::Index b = 0; b < B; ++b) {
      const auto ux = up.row(b).head(D);
      const auto uy = up.row(b).tail(D);
      g(b, 0) = ux.dot(grid.row(0));
      g(b, 1) = ux.dot(grid.row(1));
      g(b, 2) = ux.sum();
      g(b, 3) = uy.dot(grid.row(0));
      g(b, 4) = uy.dot(grid.row(1));
      g(b, 5) = uy.sum();
    }
    t.accumulate(ip, g);
  });
}

/// Affine offsets of a rotation by psi (B x 1) about the image centre:
/// [[cos, -sin, 0], [sin, cos, 0]] minus the identity.
inline Var rotation_offsets(const Var &psi) {
  if (psi.cols() != 1) fail(ErrorCode::DimensionMismatch, "rotation_offsets: expected B x 1 angles");
  const Matrix &a = psi.value();
  const Eigen::Index B = a.rows();
  Matrix out = Matrix::Zero(B, 6);
  for (Eigen::Index b = 0; b < B; ++b) {
    const double c = std::cos(a(b, 0)), s = std::sin(a(b, 0));
    out(b, 0) = c - 1.0;
    out(b, 1) = -s;
    out(b, 3) = s;
    out(b, 4) = c - 1.0;
  }
  const auto ia = psi.id();
  return psi.tape()->record(std::move(out), psi.requires_grad(), [ia, B](Tape &t, const Matrix &up) {
    const Matrix &a = t.value(ia);
    Matrix g(B, 1);
    for (Eigen::Index b = 0; b < B; ++b) {
      const double c = std::cos(a(b, 0)), s = std::sin(a(b, 0));
      g(b, 0) = -s * up(b, 0) - c * up(b, 1) + c * up(b, 3) - s * up(b, 4);
    }
    t.accumulate(ia, g);
  });
}

} // namespace igp::ad
