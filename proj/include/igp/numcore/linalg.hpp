#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "igp/error.hpp"

namespace igp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Lower Cholesky factor together with the diagonal jitter that had to be
/// added to make the factorisation succeed.
struct CholFactor {
  Matrix L;
  double jitter = 0.0;

  Eigen::Index size() const { return L.rows(); }

  /// log det(A + jitter I) = 2 sum log L_ii
  double log_det() const { return 2.0 * L.diagonal().array().log().sum(); }
};

inline void require_square(const Matrix &A, const char *what) {
  if (A.rows() != A.cols() || A.rows() == 0) {
    fail(ErrorCode::DimensionMismatch,
         std::string(what) + ": expected a non-empty square matrix, got " +
             std::to_string(A.rows()) + "x" + std::to_string(A.cols()));
  }
}

/// Factorises a symmetric matrix, escalating the diagonal jitter geometrically
/// (x2 from 1e-10 * mean diagonal) until the factorisation succeeds or the
/// jitter would exceed `max_jitter`.
inline CholFactor cholesky(const Matrix &A, double max_jitter = 1e-2) {
  require_square(A, "cholesky");
  const double scale = A.cwiseAbs().maxCoeff();
  if (!((A - A.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * std::max(scale, 1.0))) {
    fail(ErrorCode::DimensionMismatch, "cholesky: input is not symmetric");
  }

  const Eigen::Index n = A.rows();
  double jitter = 0.0;
  const double mean_diag = A.diagonal().mean();
  double next = 1e-10 * (mean_diag > 0.0 ? mean_diag : 1.0);
  for (;;) {
    Eigen::LLT<Matrix> llt;
    if (jitter == 0.0) {
      llt.compute(A);
    } else {
      llt.compute(A + jitter * Matrix::Identity(n, n));
    }
    if (llt.info() == Eigen::Success) {
      Matrix L = llt.matrixL();
      if ((L.diagonal().array() > 0.0).all() && L.allFinite()) {
        return CholFactor{std::move(L), jitter};
      }
    }
    if (next > max_jitter) {
      fail(ErrorCode::NotPositiveDefinite,
           "cholesky: matrix not positive definite with jitter up to " +
               std::to_string(max_jitter));
    }
    jitter = next;
    next *= 2.0;
  }
}

/// Solves L X = B, or L^T X = B when `transpose` is set.
inline Matrix tri_solve(const Matrix &L, const Matrix &B, bool transpose = false) {
  require_square(L, "tri_solve");
  if (L.rows() != B.rows()) {
    fail(ErrorCode::DimensionMismatch,
         "tri_solve: factor is " + std::to_string(L.rows()) + "x" +
             std::to_string(L.cols()) + " but right-hand side has " +
             std::to_string(B.rows()) + " rows");
  }
  if ((L.diagonal().array() == 0.0).any()) {
    fail(ErrorCode::NotPositiveDefinite, "tri_solve: singular triangular factor");
  }
  if (transpose) {
    return L.transpose().triangularView<Eigen::Upper>().solve(B);
  }
  return L.triangularView<Eigen::Lower>().solve(B);
}

inline Matrix tri_solve(const CholFactor &factor, const Matrix &B, bool transpose = false) {
  return tri_solve(factor.L, B, transpose);
}

/// A^{-1} B through the factor of A.
inline Matrix chol_solve(const CholFactor &factor, const Matrix &B) {
  return tri_solve(factor, tri_solve(factor, B, false), true);
}

} // namespace igp
