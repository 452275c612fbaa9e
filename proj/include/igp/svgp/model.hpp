#pragma once

#include <string>

#include "igp/augment/sampler.hpp"
#include "igp/kernels/invariant.hpp"

namespace igp::svgp {

using kernels::InvariantKernelSpec;
using kernels::RbfParams;

enum class Likelihood { gaussian, logistic_pg };

namespace names {
inline const std::string variance = "kernel/variance";
inline const std::string lengthscale = "kernel/lengthscale";
inline const std::string noise = "likelihood/noise";
inline const std::string inducing = "inducing/Z";
inline const std::string q_mean = "q/mean";
inline std::string q_sqrt(Eigen::Index c) { return "q/sqrt_" + std::to_string(c); }
} // namespace names

struct ModelConfig {
  InvariantKernelSpec kernel;
  Eigen::Index M = 10;
  Eigen::Index outputs = 1;
  Likelihood likelihood = Likelihood::gaussian;
  double noise_variance = 0.1;
  /// Parameterise q(u) relative to the prior (u = L v, v ~ N(m, L_q L_q^T)).
  bool whiten = false;
  /// Initial q covariance: q_scale * variance * I (unwhitened) or q_scale * I.
  double q_scale = 1e-3;
  bool train_kernel = true;
  bool train_noise = true;
  bool train_inducing = true;
  bool train_augmentation = true;
  /// Initial sampler parameters; the affine box must match the sampler's mode.
  augment::AffineBounds affine_init;
  double elastic_amplitude_init = 0.1;
  std::uint64_t seed = 0;
};

/// Static configuration plus every trainable quantity, registered by name.
struct GpModel {
  ModelConfig config;
  ad::ParameterSet params;

  Eigen::Index M() const { return config.M; }
  Eigen::Index outputs() const { return config.outputs; }
  const augment::AugmentationSampler &sampler() const { return config.kernel.sampler; }
  RbfParams base() const { return {params.scalar(names::variance), params.scalar(names::lengthscale)}; }
  Matrix Z() const { return params.value(names::inducing); }
};

namespace detail {

inline void register_sampler(ad::ParameterSet &params, const augment::AugmentationSampler &s, const ModelConfig &cfg) {
  using augment::SamplerKind;
  switch (s.kind) {
  case SamplerKind::finite_orbit:
    return;
  case SamplerKind::affine:
    if (cfg.affine_init.dims() != s.affine_dims() || cfg.affine_init.centre.size() != s.affine_dims()) {
      fail(ErrorCode::BadConfig, "initial affine bounds do not match the sampler's mode");
    }
    augment::register_affine(params, s, cfg.affine_init, cfg.train_augmentation, cfg.train_augmentation);
    return;
  case SamplerKind::elastic:
    augment::register_elastic(params, s, cfg.elastic_amplitude_init, cfg.train_augmentation);
    return;
  case SamplerKind::composite:
    for (const auto &part : s.parts) register_sampler(params, part, cfg);
    return;
  }
}

} // namespace detail

/// Z is M distinct training inputs chosen with a fixed-seed subsample; m = 0.
inline GpModel init_model(const ModelConfig &cfg, const Matrix &X) {
  if (cfg.M < 1) fail(ErrorCode::BadConfig, "M must be at least 1");
  if (cfg.M > X.rows()) {
    fail(ErrorCode::BadConfig, "M=" + std::to_string(cfg.M) + " exceeds the " + std::to_string(X.rows()) +
                                   " available training inputs");
  }
  if (cfg.outputs < 1) fail(ErrorCode::BadConfig, "need at least one output");
  if (cfg.likelihood == Likelihood::logistic_pg && cfg.outputs != 1) {
    fail(ErrorCode::BadConfig, "the logistic likelihood is binary: one output");
  }
  GpModel model;
  model.config = cfg;
  auto &p = model.params;
  const auto &base = cfg.kernel.base;
  p.add_scalar(names::variance, base.variance, ad::Transform::softplus, cfg.train_kernel);
  p.add_scalar(names::lengthscale, base.lengthscale, ad::Transform::softplus, cfg.train_kernel);
  if (cfg.likelihood == Likelihood::gaussian) {
    p.add_scalar(names::noise, cfg.noise_variance, ad::Transform::softplus, cfg.train_noise);
  }
  RngStream stream(cfg.seed, {"init", "inducing"});
  const auto rows = sample_without_replacement(stream, X.rows(), cfg.M);
  Matrix Z(cfg.M, X.cols());
  for (Eigen::Index m = 0; m < cfg.M; ++m) Z.row(m) = X.row(rows[static_cast<std::size_t>(m)]);
  p.add(names::inducing, Z, ad::Transform::identity, cfg.train_inducing);
  p.add(names::q_mean, Matrix::Zero(cfg.M, cfg.outputs));
  const double sd = std::sqrt(cfg.whiten ? cfg.q_scale : cfg.q_scale * base.variance);
  Matrix raw = Matrix::Zero(cfg.M, cfg.M);
  raw.diagonal().setConstant(softplus_inverse(sd));
  for (Eigen::Index c = 0; c < cfg.outputs; ++c) {
    // Stored raw: strictly lower entries as is, diagonal through softplus.
    p.add(names::q_sqrt(c), raw);
  }
  detail::register_sampler(p, cfg.kernel.sampler, cfg);
  return model;
}

/// Lower-triangular factor of q's covariance for output c.
inline Matrix q_sqrt_value(const GpModel &model, Eigen::Index c) {
  Matrix L = model.params.value(names::q_sqrt(c)).triangularView<Eigen::Lower>();
  for (Eigen::Index i = 0; i < L.rows(); ++i) L(i, i) = softplus(L(i, i));
  return L;
}

/// Sets q's covariance factor for output c to a given lower-triangular matrix
/// with positive diagonal.
inline void set_q_sqrt(GpModel &model, Eigen::Index c, const Matrix &L) {
  Matrix raw = L.triangularView<Eigen::Lower>();
  for (Eigen::Index i = 0; i < raw.rows(); ++i) raw(i, i) = softplus_inverse(L(i, i));
  model.params.set_value(names::q_sqrt(c), raw);
}

} // namespace igp::svgp
