#pragma once

#include <vector>

#include "igp/augment/orbit.hpp"
#include "igp/augment/sampler.hpp"
#include "igp/kernels/rbf.hpp"

namespace igp::kernels {

using augment::AugmentationSampler;
using augment::SampleMode;

/// Base kernel, augmentation distribution and per-input sample count.
/// Under the expectation convention f(x) = E[g(x_a)], so
///   k_f(x, x') = E E k_g(x_a, x'_a),  k_fu(x, z) = E k_g(x_a, z).
struct InvariantKernelSpec {
  RbfParams base;
  AugmentationSampler sampler;
  Eigen::Index S = 2;
};

/// S augmented copies of one source input (rows of `samples`).
struct SampleSet {
  Vector source;
  Matrix samples;
  SampleMode mode = SampleMode::iid;
  /// Orbit size; only meaningful for without_replacement.
  Eigen::Index P = 0;

  Eigen::Index S() const { return samples.rows(); }
};

/// Weights (off-diagonal, diagonal) that turn the pair sums of one sample set
/// into an unbiased estimate of the double integral/sum:
///   iid:                  1/(S(S-1)) * offdiag
///   without replacement:  (P-1)/(P S(S-1)) * offdiag + 1/(P S) * diag
struct PairWeights {
  double offdiag = 0.0;
  double diag = 0.0;
};

inline PairWeights pair_weights(SampleMode mode, Eigen::Index S, Eigen::Index P) {
  const double s = static_cast<double>(S);
  if (mode == SampleMode::without_replacement) {
    if (S > P) fail(ErrorCode::SampleCountExceedsOrbit, "S exceeds orbit size");
    const double p = static_cast<double>(P);
    if (S == 1) {
      // Only a full orbit of size 1 is exact with a single sample.
      if (P != 1) fail(ErrorCode::TooFewSamples, "double estimate needs S >= 2 unless P = 1");
      return {0.0, 1.0};
    }
    return {(p - 1.0) / (p * s * (s - 1.0)), 1.0 / (p * s)};
  }
  if (S < 2) fail(ErrorCode::TooFewSamples, "double estimate needs S >= 2");
  return {1.0 / (s * (s - 1.0)), 0.0};
}

/// Unbiased estimate of the double integral of r over p(x_a|x) p(x'_a|x) from a
/// single sample set; `r` is the S x S matrix r(x^(s), x^(s')).
inline double double_estimate(const SampleSet &samples, const Matrix &r) {
  const Eigen::Index S = samples.S();
  if (r.rows() != S || r.cols() != S) fail(ErrorCode::DimensionMismatch, "double_estimate: r must be S x S");
  const PairWeights w = pair_weights(samples.mode, S, samples.P);
  const double diag = r.diagonal().sum();
  const double off = r.sum() - diag;
  return w.offdiag * off + w.diag * diag;
}

/// Monte-Carlo estimate of k_fu(x, z_m) for every row of Z.
inline Vector kfu_estimate(const SampleSet &samples, const Matrix &Z, const RbfParams &base) {
  if (samples.S() < 1) fail(ErrorCode::TooFewSamples, "kfu_estimate: empty sample set");
  return rbf_gram(samples.samples, Z, base).colwise().mean().transpose();
}

namespace detail {

inline const augment::OrbitSpec &require_orbit(const InvariantKernelSpec &spec) {
  if (!spec.sampler.is_finite_orbit()) fail(ErrorCode::NotFiniteOrbit, "exact invariant kernels need a finite orbit");
  return spec.sampler.orbit;
}

inline Matrix orbit_matrix(const Vector &x, const InvariantKernelSpec &spec) {
  const auto pts = augment::orbit_points(x, require_orbit(spec), spec.sampler.shape);
  Matrix m(static_cast<Eigen::Index>(pts.size()), x.size());
  for (std::size_t i = 0; i < pts.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
  return m;
}

} // namespace detail

/// (1/P^2) sum_a sum_a' k_g(x_a, x'_a') over full orbits.
inline double kf_exact(const Vector &x, const Vector &xp, const InvariantKernelSpec &spec) {
  return rbf_gram(detail::orbit_matrix(x, spec), detail::orbit_matrix(xp, spec), spec.base).mean();
}

/// (1/P) sum_a k_g(x_a, z).
inline double kfu_exact(const Vector &x, const Vector &z, const InvariantKernelSpec &spec) {
  return rbf_gram(detail::orbit_matrix(x, spec), z.transpose(), spec.base).mean();
}

/// Gram matrix of kf_exact over the rows of X1 and X2.
inline Matrix kf_exact_gram(const Matrix &X1, const Matrix &X2, const InvariantKernelSpec &spec) {
  Matrix K(X1.rows(), X2.rows());
  std::vector<Matrix> orbits2;
  for (Eigen::Index j = 0; j < X2.rows(); ++j) orbits2.push_back(detail::orbit_matrix(X2.row(j).transpose(), spec));
  for (Eigen::Index i = 0; i < X1.rows(); ++i) {
    const Matrix oi = detail::orbit_matrix(X1.row(i).transpose(), spec);
    for (Eigen::Index j = 0; j < X2.rows(); ++j) K(i, j) = rbf_gram(oi, orbits2[static_cast<std::size_t>(j)], spec.base).mean();
  }
  return K;
}

/// Draws a SampleSet for x from the spec's sampler.
inline SampleSet draw_samples(const Vector &x, const InvariantKernelSpec &spec, const ad::ParameterSet &params,
                              const RngStream &stream, Eigen::Index S = 0) {
  SampleSet set;
  set.source = x;
  set.samples = augment::draw_set(x, spec.sampler, params, S > 0 ? S : spec.S, stream);
  set.mode = spec.sampler.is_finite_orbit() ? spec.sampler.mode : SampleMode::iid;
  set.P = spec.sampler.orbit_size();
  return set;
}

} // namespace igp::kernels
