#pragma once

#include <string>
#include <vector>

#include "igp/augment/affine.hpp"
#include "igp/augment/elastic.hpp"
#include "igp/augment/orbit.hpp"
#include "igp/augment/warp.hpp"
#include "igp/autodiff/ops.hpp"
#include "igp/numcore/rng.hpp"

namespace igp::augment {

enum class SampleMode { iid, without_replacement };

enum class SamplerKind { finite_orbit, affine, elastic, composite };

/// Static description of p(x_a | x). Trainable quantities live in a
/// ParameterSet under `prefix`:
///   affine:  <prefix>/centre (identity), <prefix>/halfwidth (softplus)
///   elastic: <prefix>/amplitude (softplus)
/// Composite samplers apply their parts in order (continuous parts only).
struct AugmentationSampler {
  SamplerKind kind = SamplerKind::finite_orbit;
  OrbitSpec orbit = OrbitSpec::identity();
  SampleMode mode = SampleMode::without_replacement;
  AffineMode affine_mode = AffineMode::full_affine;
  double smoothness = 3.0;
  ImageShape shape;
  std::string prefix = "aug";
  std::vector<AugmentationSampler> parts;

  bool is_finite_orbit() const { return kind == SamplerKind::finite_orbit; }
  Eigen::Index orbit_size() const { return kind == SamplerKind::finite_orbit ? orbit.P : 0; }
  Eigen::Index affine_dims() const { return affine_mode == AffineMode::full_affine ? 6 : 1; }

  static AugmentationSampler identity() { return {}; }

  static AugmentationSampler finite(OrbitSpec orbit, SampleMode mode, ImageShape shape = {}) {
    AugmentationSampler s;
    s.orbit = std::move(orbit);
    s.mode = mode;
    s.shape = shape;
    return s;
  }

  static AugmentationSampler affine(AffineMode mode, ImageShape shape, std::string prefix = "aug/affine") {
    AugmentationSampler s;
    s.kind = SamplerKind::affine;
    s.mode = SampleMode::iid;
    s.affine_mode = mode;
    s.shape = shape;
    s.prefix = std::move(prefix);
    return s;
  }

  static AugmentationSampler elastic(double smoothness, ImageShape shape, std::string prefix = "aug/elastic") {
    AugmentationSampler s;
    s.kind = SamplerKind::elastic;
    s.mode = SampleMode::iid;
    s.smoothness = smoothness;
    s.shape = shape;
    s.prefix = std::move(prefix);
    return s;
  }

  static AugmentationSampler composite(std::vector<AugmentationSampler> parts) {
    AugmentationSampler s;
    s.kind = SamplerKind::composite;
    s.mode = SampleMode::iid;
    s.shape = parts.empty() ? ImageShape{} : parts.front().shape;
    s.parts = std::move(parts);
    return s;
  }
};

/// Registers the sampler's trainable parameters with initial values.
inline void register_affine(ad::ParameterSet &params, const AugmentationSampler &spec, const AffineBounds &init,
                            bool centre_trainable = true, bool halfwidth_trainable = true) {
  params.add(spec.prefix + "/centre", init.centre, ad::Transform::identity, centre_trainable);
  params.add(spec.prefix + "/halfwidth", init.halfwidth(), ad::Transform::softplus, halfwidth_trainable);
}

inline void register_elastic(ad::ParameterSet &params, const AugmentationSampler &spec, double amplitude,
                             bool trainable = true) {
  params.add_scalar(spec.prefix + "/amplitude", amplitude, ad::Transform::softplus, trainable);
}

inline AffineBounds affine_bounds(const ad::ParameterSet &params, const AugmentationSampler &spec) {
  AffineBounds b;
  b.mode = spec.affine_mode;
  b.centre = params.at(spec.prefix + "/centre").value();
  b.halfwidth_raw = params.at(spec.prefix + "/halfwidth").storage;
  return b;
}

inline ElasticParams elastic_params(const ad::ParameterSet &params, const AugmentationSampler &spec) {
  return {params.scalar(spec.prefix + "/amplitude"), spec.smoothness};
}

/// Base noise for S samples of one input. Parameter-free: gradients never flow
/// into it.
struct SamplerNoise {
  std::vector<Eigen::Index> orbit_indices;
  Matrix uniforms; // S x k (affine)
  Matrix normals;  // S x 2*H*W (elastic)
  std::vector<SamplerNoise> parts;
};

inline SamplerNoise draw_noise(const AugmentationSampler &spec, Eigen::Index S, RngStream stream) {
  SamplerNoise noise;
  switch (spec.kind) {
  case SamplerKind::finite_orbit:
    if (spec.mode == SampleMode::without_replacement) {
      if (S > spec.orbit.P) {
        fail(ErrorCode::SampleCountExceedsOrbit,
             "draw_set: S=" + std::to_string(S) + " exceeds orbit size P=" + std::to_string(spec.orbit.P));
      }
      if (S == spec.orbit.P) {
        // A full orbit is visited in its natural order: the estimate is then
        // a deterministic function of the input.
        for (Eigen::Index s = 0; s < S; ++s) noise.orbit_indices.push_back(s);
      } else {
        noise.orbit_indices = sample_without_replacement(stream, spec.orbit.P, S);
      }
    } else {
      for (Eigen::Index s = 0; s < S; ++s) {
        noise.orbit_indices.push_back(static_cast<Eigen::Index>(stream.below(static_cast<std::uint64_t>(spec.orbit.P))));
      }
    }
    break;
  case SamplerKind::affine:
    noise.uniforms = draw_matrix(stream, DrawKind::uniform01, S, spec.affine_dims());
    break;
  case SamplerKind::elastic:
    noise.normals = draw_matrix(stream, DrawKind::standard_normal, S, 2 * spec.shape.pixels());
    break;
  case SamplerKind::composite:
    for (std::size_t i = 0; i < spec.parts.size(); ++i) {
      noise.parts.push_back(draw_noise(spec.parts[i], S, stream.child(std::to_string(i))));
    }
    break;
  }
  return noise;
}

/// Augmented batch: rows n*S .. n*S+S-1 hold the S samples of input n.
struct AugmentedBatch {
  ad::Var samples;
  Eigen::Index S = 0;
  /// Drawn transformation parameters of the last affine part (N*S x k), for logging.
  Matrix affine_params;
};

namespace detail {

inline ad::Var apply_continuous(ad::Tape &tape, const AugmentationSampler &spec, const ad::ParameterSet &params,
                                ad::Var input, const std::vector<const SamplerNoise *> &noise, Eigen::Index S,
                                Matrix &affine_log) {
  const Eigen::Index N = static_cast<Eigen::Index>(noise.size());
  const ImageShape shape = spec.shape;
  switch (spec.kind) {
  case SamplerKind::affine: {
    const Eigen::Index k = spec.affine_dims();
    Matrix signed_u(N * S, k);
    for (Eigen::Index n = 0; n < N; ++n) {
      signed_u.middleRows(n * S, S) = 2.0 * noise[static_cast<std::size_t>(n)]->uniforms.array() - 1.0;
    }
    ad::Var centre = tape.bind(params, spec.prefix + "/centre");
    ad::Var halfwidth = tape.bind(params, spec.prefix + "/halfwidth");
    ad::Var draws =
        ad::add(ad::broadcast_rows(centre, N * S), ad::mul_const(ad::broadcast_rows(halfwidth, N * S), signed_u));
    affine_log = draws.value();
    ad::Var offsets = spec.affine_mode == AffineMode::full_affine ? draws : ad::rotation_offsets(draws);
    return ad::bilinear_warp(input, ad::affine_grid(offsets, shape), shape);
  }
  case SamplerKind::elastic: {
    const Eigen::Index D = shape.pixels();
    Matrix unit(N * S, 2 * D);
    for (Eigen::Index n = 0; n < N; ++n) {
      const Matrix &z = noise[static_cast<std::size_t>(n)]->normals;
      for (Eigen::Index s = 0; s < S; ++s) {
        unit.row(n * S + s) = unit_displacement(z.row(s).transpose(), shape, spec.smoothness);
      }
    }
    const Matrix grid = base_grid(shape);
    RowVector flat(2 * D);
    flat << grid.row(0), grid.row(1);
    ad::Var amplitude = tape.bind(params, spec.prefix + "/amplitude");
    ad::Var coords = ad::add_const(ad::scalar_mul(amplitude, tape.constant(unit)), flat.replicate(N * S, 1));
    return ad::bilinear_warp(input, coords, shape);
  }
  case SamplerKind::composite: {
    ad::Var x = input;
    for (std::size_t i = 0; i < spec.parts.size(); ++i) {
      std::vector<const SamplerNoise *> part_noise;
      for (const auto *nz : noise) part_noise.push_back(&nz->parts[i]);
      x = apply_continuous(tape, spec.parts[i], params, x, part_noise, S, affine_log);
    }
    return x;
  }
  case SamplerKind::finite_orbit:
    break;
  }
  fail(ErrorCode::UnsupportedShape, "finite orbits cannot be nested inside a composite sampler");
}

} // namespace detail

/// Differentiable augmentation of a batch of inputs X (N x D). Point n draws
/// its noise from stream.child(n).
inline AugmentedBatch augment_batch(ad::Tape &tape, const AugmentationSampler &spec, const ad::ParameterSet &params,
                                    const Matrix &X, Eigen::Index S, const RngStream &stream) {
  const Eigen::Index N = X.rows();
  std::vector<SamplerNoise> noise;
  noise.reserve(static_cast<std::size_t>(N));
  for (Eigen::Index n = 0; n < N; ++n) noise.push_back(draw_noise(spec, S, stream.child(std::to_string(n))));

  AugmentedBatch out;
  out.S = S;
  if (spec.kind == SamplerKind::finite_orbit) {
    Matrix samples(N * S, X.cols());
    for (Eigen::Index n = 0; n < N; ++n) {
      const auto orbit = orbit_points(X.row(n).transpose(), spec.orbit, spec.shape);
      const auto &idx = noise[static_cast<std::size_t>(n)].orbit_indices;
      for (Eigen::Index s = 0; s < S; ++s) {
        samples.row(n * S + s) = orbit[static_cast<std::size_t>(idx[static_cast<std::size_t>(s)])].transpose();
      }
    }
    out.samples = tape.constant(std::move(samples));
    return out;
  }
  if (!spec.shape.valid() || X.cols() != spec.shape.pixels()) {
    fail(ErrorCode::UnsupportedShape, "continuous samplers need image inputs matching the sampler shape");
  }
  Matrix repeated(N * S, X.cols());
  for (Eigen::Index n = 0; n < N; ++n) repeated.middleRows(n * S, S) = X.row(n).replicate(S, 1);
  std::vector<const SamplerNoise *> ptrs;
  for (const auto &nz : noise) ptrs.push_back(&nz);
  out.samples = detail::apply_continuous(tape, spec, params, tape.constant(std::move(repeated)), ptrs, S,
                                         out.affine_params);
  return out;
}

/// S draws from p(x_a | x) for one input, rows are samples. Deterministic in
/// the stream.
inline Matrix draw_set(const Vector &x, const AugmentationSampler &spec, const ad::ParameterSet &params, Eigen::Index S,
                       const RngStream &stream) {
  ad::Tape tape(false);
  Matrix X = x.transpose();
  // A single point uses the stream itself rather than a per-point child.
  const SamplerNoise noise = draw_noise(spec, S, stream);
  if (spec.kind == SamplerKind::finite_orbit) {
    const auto orbit = orbit_points(x, spec.orbit, spec.shape);
    Matrix out(S, x.size());
    for (Eigen::Index s = 0; s < S; ++s) {
      out.row(s) = orbit[static_cast<std::size_t>(noise.orbit_indices[static_cast<std::size_t>(s)])].transpose();
    }
    return out;
  }
  if (!spec.shape.valid() || x.size() != spec.shape.pixels()) {
    fail(ErrorCode::UnsupportedShape, "continuous samplers need image inputs matching the sampler shape");
  }
  Matrix log;
  return detail::apply_continuous(tape, spec, params, tape.constant(X.replicate(S, 1)), {&noise}, S, log).value();
}

} // namespace igp::augment
