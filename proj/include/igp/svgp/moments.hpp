#pragma once

#include <numbers>
#include <vector>

#include "igp/svgp/model.hpp"

namespace igp::svgp {

using kernels::PairWeights;

/// Plain Gram matrix of the inducing points and its factor.
struct KuuFactor {
  Matrix K;
  CholFactor chol;
};

/// Repeated inducing inputs make K_uu singular; they are reported rather than
/// hidden by jitter.
inline KuuFactor kuu(const Matrix &Z, const RbfParams &base, double max_jitter = 1e-2) {
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      if (Z.row(i) == Z.row(j)) {
        fail(ErrorCode::NotPositiveDefinite,
             "K_uu: inducing points " + std::to_string(j) + " and " + std::to_string(i) + " coincide");
      }
    }
  }
  Matrix K = kernels::rbf_gram(Z, Z, base);
  CholFactor f = cholesky(K, max_jitter);
  return {std::move(K), std::move(f)};
}

/// Prior over u recorded on a tape.
struct PriorVars {
  ad::Var variance;
  ad::Var lengthscale;
  ad::Var Z;
  ad::Var L;
  double jitter = 0.0;
};

inline PriorVars bind_prior(ad::Tape &tape, const GpModel &model) {
  PriorVars p;
  p.variance = tape.bind(model.params, names::variance);
  p.lengthscale = tape.bind(model.params, names::lengthscale);
  p.Z = tape.bind(model.params, names::inducing);
  const auto chol = ad::cholesky(ad::rbf_cross(p.Z, p.Z, p.variance, p.lengthscale));
  p.L = chol.L;
  p.jitter = chol.jitter;
  return p;
}

/// Per-point estimates, each N x C: mean, estimated square of the mean, and
/// variance. The last two may be negative for finite S.
struct MomentVars {
  ad::Var mean;
  ad::Var mean_sq;
  ad::Var var;
};

struct MomentEstimates {
  Matrix mean;
  Matrix mean_sq;
  Matrix var;
};

namespace detail {

/// Pair-sum estimate from the full group sum and its diagonal part.
inline ad::Var pair_estimate(const ad::Var &full, const ad::Var &diag, const PairWeights &w) {
  return ad::add(ad::scale(full, w.offdiag), ad::scale(diag, w.diag - w.offdiag));
}

/// Estimate of sum_{s,s'} a_s . a_s' over groups of S rows of `rows`.
inline ad::Var inner_pair_estimate(const ad::Var &rows, Eigen::Index S, const PairWeights &w) {
  const ad::Var full = ad::row_sum(ad::square(ad::group_sum(rows, S)));
  const ad::Var diag = ad::group_sum(ad::row_sum(ad::square(rows)), S);
  return pair_estimate(full, diag, w);
}

} // namespace detail

/// Moments from augmented samples (rows n*S .. n*S+S-1 belong to input n),
/// all derived from the same sample set. `with_var = false` leaves var unset.
inline MomentVars moments_from_samples(ad::Tape &tape, const GpModel &model, const PriorVars &prior,
                                       const ad::Var &samples, Eigen::Index S, const PairWeights &w,
                                       bool with_var = true) {
  const Eigen::Index N = samples.rows() / S;
  const ad::Var Kfu = ad::rbf_cross(samples, prior.Z, prior.variance, prior.lengthscale);
  const ad::Var m = tape.bind(model.params, names::q_mean);
  const ad::Var alpha = model.config.whiten ? ad::tri_solve(prior.L, m, true)
                                             : ad::tri_solve(prior.L, ad::tri_solve(prior.L, m), true);
  const ad::Var v = ad::matmul(Kfu, alpha);

  MomentVars out;
  out.mean = ad::scale(ad::group_sum(v, S), 1.0 / static_cast<double>(S));
  out.mean_sq = detail::pair_estimate(ad::square(ad::group_sum(v, S)), ad::group_sum(ad::square(v), S), w);
  if (!with_var) return out;

  const ad::Var A = ad::tri_solve(prior.L, ad::transpose(Kfu));
  // k_f(x, x): off-diagonal pairs from the kernel, diagonal is S * variance.
  const ad::Var kg_off = ad::rbf_group_offdiag(samples, prior.variance, prior.lengthscale, S);
  const ad::Var kg = ad::add(ad::scale(kg_off, w.offdiag),
                             ad::scale(ad::broadcast_rows(prior.variance, N), w.diag * static_cast<double>(S)));
  const ad::Var common = ad::sub(kg, detail::inner_pair_estimate(ad::transpose(A), S, w));
  const ad::Var W = model.config.whiten ? A : ad::tri_solve(prior.L, A, true);
  const ad::Var Wt = ad::transpose(W);
  std::vector<ad::Var> columns;
  for (Eigen::Index c = 0; c < model.outputs(); ++c) {
    const ad::Var Lq = ad::tril_softplus_diag(tape.bind(model.params, names::q_sqrt(c)));
    columns.push_back(ad::add(common, detail::inner_pair_estimate(ad::matmul(Wt, Lq), S, w)));
  }
  out.var = columns.size() == 1 ? columns.front() : ad::hcat(columns);
  return out;
}

/// Weights for the sampler's estimator at sample count S.
inline PairWeights estimator_weights(const augment::AugmentationSampler &sampler, Eigen::Index S) {
  const auto mode = sampler.is_finite_orbit() ? sampler.mode : augment::SampleMode::iid;
  return kernels::pair_weights(mode, S, sampler.orbit_size());
}

/// Draws S augmentations per row of X from `sampler` and returns the moments.
inline MomentVars moments(ad::Tape &tape, const GpModel &model, const PriorVars &prior, const Matrix &X,
                          const augment::AugmentationSampler &sampler, Eigen::Index S, const RngStream &stream) {
  const PairWeights w = estimator_weights(sampler, S);
  const auto batch = augment::augment_batch(tape, sampler, model.params, X, S, stream);
  return moments_from_samples(tape, model, prior, batch.samples, S, w);
}

/// Moments with the model's own sampler and training S, evaluated without
/// gradients.
inline MomentEstimates moments(const GpModel &model, const Matrix &X, const RngStream &stream) {
  ad::Tape tape(false);
  const PriorVars prior = bind_prior(tape, model);
  const MomentVars mv = moments(tape, model, prior, X, model.sampler(), model.config.kernel.S, stream);
  return {mv.mean.value(), mv.mean_sq.value(), mv.var.value()};
}

/// KL[q(u) || p(u)] summed over outputs.
inline ad::Var kl_qu(ad::Tape &tape, const GpModel &model, const PriorVars &prior) {
  const double M = static_cast<double>(model.M());
  const ad::Var m = tape.bind(model.params, names::q_mean);
  ad::Var total = tape.constant(0.0);
  ad::Var maha = model.config.whiten ? ad::sum(ad::square(m)) : ad::sum(ad::square(ad::tri_solve(prior.L, m)));
  total = ad::add(total, maha);
  const ad::Var logdet_k = ad::scale(ad::log_diag_sum(prior.L), 2.0);
  for (Eigen::Index c = 0; c < model.outputs(); ++c) {
    const ad::Var Lq = ad::tril_softplus_diag(tape.bind(model.params, names::q_sqrt(c)));
    const ad::Var trace = model.config.whiten ? ad::sum(ad::square(Lq)) : ad::sum(ad::square(ad::tri_solve(prior.L, Lq)));
    total = ad::add(total, ad::sub(trace, ad::scale(ad::log_diag_sum(Lq), 2.0)));
    if (!model.config.whiten) total = ad::add(total, logdet_k);
  }
  return ad::scale(ad::add_scalar(total, -M * static_cast<double>(model.outputs())), 0.5);
}

/// Plain KL between N(m, Lq Lq^T) and N(0, K) given K's factor.
inline double kl_gaussian(const Vector &m, const Matrix &Lq, const CholFactor &K) {
  const double M = static_cast<double>(m.size());
  const double trace = tri_solve(K.L, Lq).squaredNorm();
  const double maha = tri_solve(K.L, m).squaredNorm();
  const double logdet_q = 2.0 * Lq.diagonal().array().log().sum();
  return 0.5 * (trace + maha - M + K.log_det() - logdet_q);
}

} // namespace igp::svgp
