#pragma once

#include <cmath>

#include "igp/autodiff/ops.hpp"
#include "igp/numcore/linalg.hpp"

namespace igp::kernels {

/// Isotropic squared-exponential base kernel k_g.
struct RbfParams {
  double variance = 1.0;
  double lengthscale = 1.0;
};

inline double k_rbf(const Vector &x, const Vector &xp, const RbfParams &p) {
  if (x.size() != xp.size()) {
    fail(ErrorCode::DimensionMismatch, "k_rbf: inputs of dimension " + std::to_string(x.size()) + " and " +
                                           std::to_string(xp.size()));
  }
  return p.variance * std::exp(-0.5 * (x - xp).squaredNorm() / (p.lengthscale * p.lengthscale));
}

namespace detail {

/// Inputs up to this dimension use explicit differences, which are exactly
/// symmetric and independent of row position; wider inputs use the GEMM form.
constexpr Eigen::Index kDirectDistanceMaxDim = 32;

inline Matrix squared_distances(const Matrix &A, const Matrix &B) {
  if (A.cols() != B.cols()) fail(ErrorCode::DimensionMismatch, "squared_distances: column mismatch");
  if (A.cols() <= kDirectDistanceMaxDim) {
    Matrix d(A.rows(), B.rows());
    for (Eigen::Index j = 0; j < B.rows(); ++j) {
      for (Eigen::Index i = 0; i < A.rows(); ++i) d(i, j) = (A.row(i) - B.row(j)).squaredNorm();
    }
    return d;
  }
  Matrix d = -2.0 * A * B.transpose();
  d.colwise() += A.rowwise().squaredNorm();
  d.rowwise() += B.rowwise().squaredNorm().transpose();
  return d.cwiseMax(0.0);
}

} // namespace detail

/// Gram matrix [k_g(a_i, b_j)].
inline Matrix rbf_gram(const Matrix &A, const Matrix &B, const RbfParams &p) {
  Matrix d = detail::squared_distances(A, B);
  const double inv = -0.5 / (p.lengthscale * p.lengthscale);
  return (p.variance * (d * inv).array().exp()).matrix();
}

} // namespace igp::kernels

namespace igp::ad {

/// Differentiable RBF cross-covariance between the rows of A and B. Variance
/// and lengthscale are 1x1 variables. A and B may be the same variable.
inline Var rbf_cross(const Var &A, const Var &B, const Var &variance, const Var &lengthscale) {
  const double var = variance.scalar();
  const double ls = lengthscale.scalar();
  Matrix d2 = kernels::detail::squared_distances(A.value(), B.value());
  Matrix K = (var * (d2 * (-0.5 / (ls * ls))).array().exp()).matrix();
  const auto ia = A.id(), ib = B.id(), iv = variance.id(), il = lengthscale.id();
  Tape &t = *A.tape();
  const std::size_t self = t.size();
  const bool rg = A.requires_grad() || B.requires_grad() || variance.requires_grad() || lengthscale.requires_grad();
  return t.record(std::move(K), rg, [ia, ib, iv, il, self, d2 = std::move(d2)](Tape &tape, const Matrix &up) {
    const Matrix &Kv = tape.value(self);
    const double var = tape.value(iv)(0, 0);
    const double ls = tape.value(il)(0, 0);
    const Matrix G = up.cwiseProduct(Kv);
    if (tape.requires_grad(iv)) tape.accumulate(iv, Matrix::Constant(1, 1, G.sum() / var));
    if (tape.requires_grad(il)) {
      tape.accumulate(il, Matrix::Constant(1, 1, G.cwiseProduct(d2).sum() / (ls * ls * ls)));
    }
    const double inv_l2 = 1.0 / (ls * ls);
    if (tape.requires_grad(ia)) {
      const Matrix &Av = tape.value(ia);
      const Matrix &Bv = tape.value(ib);
      Matrix gA = G * Bv;
      const Vector rs = G.rowwise().sum();
      gA -= rs.asDiagonal() * Av;
      tape.accumulate(ia, gA * inv_l2);
    }
    if (tape.requires_grad(ib)) {
      const Matrix &Av = tape.value(ia);
      const Matrix &Bv = tape.value(ib);
      Matrix gB = G.transpose() * Av;
      const Vector cs = G.colwise().sum().transpose();
      gB -= cs.asDiagonal() * Bv;
      tape.accumulate(ib, gB * inv_l2);
    }
  });
}

/// For rows grouped in consecutive blocks of S, returns (N x 1) with
/// sum_{s != s'} k_g(x_s, x_s') within each block.
inline Var rbf_group_offdiag(const Var &X, const Var &variance, const Var &lengthscale, Eigen::Index S) {
  if (S <= 0 || X.rows() % S != 0) fail(ErrorCode::DimensionMismatch, "rbf_group_offdiag: bad group size");
  const Eigen::Index N = X.rows() / S;
  const double var = variance.scalar();
  const double ls = lengthscale.scalar();
  const Matrix &Xv = X.value();
  Matrix out = Matrix::Zero(N, 1);
  for (Eigen::Index n = 0; n < N; ++n) {
    double acc = 0.0;
    for (Eigen::Index s = 0; s < S; ++s) {
      for (Eigen::Index r = s + 1; r < S; ++r) {
        const double d2 = (Xv.row(n * S + s) - Xv.row(n * S + r)).squaredNorm();
        acc += 2.0 * var * std::exp(-0.5 * d2 / (ls * ls));
      }
    }
    out(n, 0) = acc;
  }
  const auto ix = X.id(), iv = variance.id(), il = lengthscale.id();
  const bool rg = X.requires_grad() || variance.requires_grad() || lengthscale.requires_grad();
  return X.tape()->record(std::move(out), rg, [ix, iv, il, S, N](Tape &tape, const Matrix &up) {
    const Matrix &Xv = tape.value(ix);
    const double var = tape.value(iv)(0, 0);
    const double ls = tape.value(il)(0, 0);
    const double inv_l2 = 1.0 / (ls * ls);
    double gvar = 0.0, gls = 0.0;
    Matrix gX = tape.requires_grad(ix) ? Matrix(Matrix::Zero(Xv.rows(), Xv.cols())) : Matrix();
    for (Eigen::Index n = 0; n < N; ++n) {
      for (Eigen::Index s = 0; s < S; ++s) {
        for (Eigen::Index r = s + 1; r < S; ++r) {
          const RowVector diff = Xv.row(n * S + s) - Xv.row(n * S + r);
          const double d2 = diff.squaredNorm();
          const double k = var * std::exp(-0.5 * d2 * inv_l2);
          const double w = 2.0 * up(n, 0);
          gvar += w * k / var;
          gls += w * k * d2 / (ls * ls * ls);
          if (gX.size() != 0) {
            const RowVector g = -w * k * inv_l2 * diff;
            gX.row(n * S + s) += g;
            gX.row(n * S + r) -= g;
          }
        }
      }
    }
    if (tape.requires_grad(iv)) tape.accumulate(iv, Matrix::Constant(1, 1, gvar));
    if (tape.requires_grad(il)) tape.accumulate(il, Matrix::Constant(1, 1, gls));
    if (gX.size() != 0) tape.accumulate(ix, gX);
  });
}

} // namespace igp::ad
