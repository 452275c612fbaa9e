#pragma once

#include <functional>
#include <numbers>
#include <vector>

#include "igp/kernels/invariant.hpp"

namespace igp::svgp {

/// Dense covariance between two sets of inputs (rows).
using KernelFn = std::function<Matrix(const Matrix &, const Matrix &)>;

inline KernelFn rbf_kernel(kernels::RbfParams base) {
  return [base](const Matrix &A, const Matrix &B) { return kernels::rbf_gram(A, B, base); };
}

inline KernelFn invariant_kernel(kernels::InvariantKernelSpec spec) {
  return [spec](const Matrix &A, const Matrix &B) { return kernels::kf_exact_gram(A, B, spec); };
}

namespace detail {

inline double gaussian_logpdf(const Vector &r, const CholFactor &f) {
  const double n = static_cast<double>(r.size());
  return -0.5 * tri_solve(f.L, r).squaredNorm() - 0.5 * f.log_det() - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

inline Matrix noisy(Matrix K, double noise) {
  K.diagonal().array() += noise;
  return K;
}

} // namespace detail

/// log N(y | 0, K + noise I).
inline double exact_lml(const Matrix &X, const Vector &y, const KernelFn &k, double noise) {
  if (X.rows() != y.size()) fail(ErrorCode::ShapeMismatch, "exact_lml: X and y disagree on N");
  return detail::gaussian_logpdf(y, cholesky(detail::noisy(k(X, X), noise)));
}

/// log p(y_c | y_1..y_{c-1}) for consecutive chunks of the given sizes.
inline std::vector<double> chunked_lml(const Matrix &X, const Vector &y, const KernelFn &k, double noise,
                                       const std::vector<Eigen::Index> &sizes) {
  Eigen::Index total = 0;
  for (auto s : sizes) {
    if (s <= 0) fail(ErrorCode::BadConfig, "chunked_lml: chunk sizes must be positive");
    total += s;
  }
  if (total != X.rows() || y.size() != X.rows()) fail(ErrorCode::ShapeMismatch, "chunked_lml: chunks must cover the data");
  const Matrix K = detail::noisy(k(X, X), noise);
  std::vector<double> out;
  Eigen::Index start = 0;
  for (auto size : sizes) {
    const Vector yc = y.segment(start, size);
    Matrix cov = K.block(start, start, size, size);
    Vector mean = Vector::Zero(size);
    if (start > 0) {
      const CholFactor prev = cholesky(K.topLeftCorner(start, start));
      const Matrix A = tri_solve(prev.L, K.block(0, start, start, size));
      mean = A.transpose() * tri_solve(prev.L, y.head(start));
      cov -= A.transpose() * A;
    }
    out.push_back(detail::gaussian_logpdf(yc - mean, cholesky(cov)));
    start += size;
  }
  return out;
}

/// Exact posterior of the latent function at Xs.
struct ExactPrediction {
  Vector mean;
  Vector var;
};

inline ExactPrediction exact_predict(const Matrix &X, const Vector &y, const Matrix &Xs, const KernelFn &k,
                                     double noise) {
  const CholFactor f = cholesky(detail::noisy(k(X, X), noise));
  const Matrix A = tri_solve(f.L, k(X, Xs));
  ExactPrediction p;
  p.mean = A.transpose() * tri_solve(f.L, y);
  p.var = (k(Xs, Xs).diagonal() - A.colwise().squaredNorm().transpose()).cwiseMax(0.0);
  return p;
}

/// Differentiable log marginal likelihood for a finite-orbit invariant kernel
/// (the identity orbit gives the plain base kernel).
inline ad::Var exact_lml(ad::Tape &tape, const Matrix &X, const Vector &y, const augment::OrbitSpec &orbit,
                         const ad::Var &variance, const ad::Var &lengthscale, const ad::Var &noise,
                         augment::ImageShape shape = {}) {
  const Eigen::Index N = X.rows(), P = orbit.P;
  Matrix stacked(N * P, X.cols());
  for (Eigen::Index n = 0; n < N; ++n) {
    const auto pts = augment::orbit_points(X.row(n).transpose(), orbit, shape);
    for (Eigen::Index a = 0; a < P; ++a) stacked.row(n * P + a) = pts[static_cast<std::size_t>(a)].transpose();
  }
  const ad::Var S = tape.constant(stacked);
  ad::Var K = ad::rbf_cross(S, S, variance, lengthscale);
  if (P > 1) {
    K = ad::group_sum(ad::transpose(ad::group_sum(K, P)), P);
    K = ad::scale(K, 1.0 / static_cast<double>(P * P));
  }
  K = ad::add(K, ad::scalar_mul(noise, tape.constant(Matrix::Identity(N, N))));
  const ad::Var L = ad::cholesky(K).L;
  const ad::Var alpha = ad::tri_solve(L, tape.constant(Matrix(y)));
  const ad::Var quad = ad::scale(ad::sum(ad::square(alpha)), -0.5);
  return ad::add_scalar(ad::sub(quad, ad::log_diag_sum(L)),
                        -0.5 * static_cast<double>(N) * std::log(2.0 * std::numbers::pi));
}

} // namespace igp::svgp
