#pragma once

#include <numbers>

#include "igp/svgp/moments.hpp"

namespace igp::svgp {

/// ELBO estimate split into its data-fit and KL parts (elbo = data_fit - kl).
struct ElboVars {
  ad::Var elbo;
  ad::Var data_fit;
  ad::Var kl;
};

struct ElboTerms {
  double elbo = 0.0;
  double data_fit = 0.0;
  double kl = 0.0;
};

inline ElboTerms values(const ElboVars &v) { return {v.elbo.scalar(), v.data_fit.scalar(), v.kl.scalar()}; }

/// Expected Gaussian log likelihood summed over a batch, affine in the
/// moment estimates.
inline ad::Var gaussian_expected_loglik(const MomentVars &mv, const Matrix &Y, const ad::Var &noise) {
  const double count = static_cast<double>(Y.size());
  ad::Var quad = ad::add(mv.mean_sq, mv.var);
  quad = ad::sub(quad, ad::mul_const(mv.mean, 2.0 * Y));
  quad = ad::add_const(quad, Y.cwiseProduct(Y));
  const ad::Var inv_noise = ad::exp(ad::neg(ad::log(noise)));
  const ad::Var fit = ad::add(ad::scale(ad::log(noise), -0.5 * count), ad::scale(ad::scalar_mul(inv_noise, ad::sum(quad)), -0.5));
  return ad::add_scalar(fit, -0.5 * count * std::log(2.0 * std::numbers::pi));
}

/// Minibatch ELBO for the Gaussian likelihood: (N/Nb) * sum of expected log
/// likelihoods minus KL. Y is Nb x C.
inline ElboVars elbo_gaussian(ad::Tape &tape, const GpModel &model, const Matrix &X, const Matrix &Y,
                              Eigen::Index N_total, const RngStream &stream) {
  if (model.config.likelihood != Likelihood::gaussian) {
    fail(ErrorCode::WrongLikelihood, "elbo_gaussian needs a Gaussian likelihood");
  }
  if (Y.rows() != X.rows() || Y.cols() != model.outputs()) {
    fail(ErrorCode::ShapeMismatch, "elbo_gaussian: targets must be N x outputs");
  }
  const PriorVars prior = bind_prior(tape, model);
  const MomentVars mv = moments(tape, model, prior, X, model.sampler(), model.config.kernel.S, stream);
  const ad::Var noise = tape.bind(model.params, names::noise);
  ElboVars out;
  const double scale = static_cast<double>(N_total) / static_cast<double>(X.rows());
  out.data_fit = ad::scale(gaussian_expected_loglik(mv, Y, noise), scale);
  out.kl = kl_qu(tape, model, prior);
  out.elbo = ad::sub(out.data_fit, out.kl);
  return out;
}

inline ElboTerms elbo_gaussian(const GpModel &model, const Matrix &X, const Matrix &Y, Eigen::Index N_total,
                               const RngStream &stream) {
  ad::Tape tape(false);
  return values(elbo_gaussian(tape, model, X, Y, N_total, stream));
}

/// Predictive distribution of the latent function (and of y for Gaussian
/// likelihoods), N x C each.
struct Prediction {
  Matrix mean;
  Matrix var;
};

/// Sampler used at prediction time: finite orbits are enumerated exhaustively.
inline augment::AugmentationSampler prediction_sampler(const augment::AugmentationSampler &s, Eigen::Index &S) {
  augment::AugmentationSampler out = s;
  if (s.is_finite_orbit()) {
    out.mode = augment::SampleMode::without_replacement;
    S = s.orbit_size();
  }
  return out;
}

/// Plug-in predictive moments with S_pred augmentations per point. Variances
/// are floored at 1e-12; Gaussian models add the noise variance when
/// `include_noise` is set. Without `with_variance` only the mean is computed
/// and var is left empty.
inline Prediction predict(const GpModel &model, const Matrix &Xs, Eigen::Index S_pred, const RngStream &stream,
                          bool include_noise = true, Eigen::Index chunk = 256, bool with_variance = true) {
  Eigen::Index S = S_pred;
  const auto sampler = prediction_sampler(model.sampler(), S);
  const PairWeights w = estimator_weights(sampler, S);
  Prediction out{Matrix(Xs.rows(), model.outputs()), with_variance ? Matrix(Xs.rows(), model.outputs()) : Matrix()};
  ad::Tape base_tape(false);
  const PriorVars prior = bind_prior(base_tape, model);
  for (Eigen::Index start = 0; start < Xs.rows(); start += chunk) {
    const Eigen::Index n = std::min(chunk, Xs.rows() - start);
    ad::Tape &tape = base_tape;
    const std::size_t mark = tape.size();
    const auto batch =
        augment::augment_batch(tape, sampler, model.params, Xs.middleRows(start, n), S, stream.child(std::to_string(start)));
    const MomentVars mv = moments_from_samples(tape, model, prior, batch.samples, S, w, with_variance);
    out.mean.middleRows(start, n) = mv.mean.value();
    if (with_variance) out.var.middleRows(start, n) = mv.var.value().cwiseMax(1e-12);
    tape.rewind(mark);
  }
  if (with_variance && include_noise && model.config.likelihood == Likelihood::gaussian) {
    out.var.array() += model.params.scalar(names::noise);
  }
  return out;
}

} // namespace igp::svgp
