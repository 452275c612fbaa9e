#pragma once

#include <string>
#include <vector>

#include "igp/harness/trainer.hpp"
#include "igp/svgp/exact.hpp"

namespace igp::harness {

// ---------------------------------------------------------------------------
// Exact GP regression with type-II maximum likelihood

struct ExactFit {
  kernels::RbfParams base;
  double noise = 0.0;
  double lml = 0.0;
};

/// Maximises the exact log marginal likelihood over variance, lengthscale
/// and noise with Adam on softplus-transformed parameters.
inline ExactFit fit_exact(const Matrix &X, const Vector &y, const augment::OrbitSpec &orbit, int steps = 1000,
                          double lr = 0.05, ExactFit init = {{1.0, 1.0}, 0.1, 0.0}) {
  ad::ParameterSet p;
  p.add_scalar("variance", init.base.variance, ad::Transform::softplus);
  p.add_scalar("lengthscale", init.base.lengthscale, ad::Transform::softplus);
  p.add_scalar("noise", init.noise, ad::Transform::softplus);
  ad::AdamOptions opts;
  opts.lr = lr;
  ad::Adam adam(opts);
  auto objective = [&](ad::Tape &tape) {
    return svgp::exact_lml(tape, X, y, orbit, tape.bind(p, "variance"), tape.bind(p, "lengthscale"),
                           tape.bind(p, "noise"));
  };
  for (int s = 0; s < steps; ++s) {
    ad::Tape tape;
    adam.step(p, tape.backward(ad::neg(objective(tape))));
  }
  ExactFit fit{{p.scalar("variance"), p.scalar("lengthscale")}, p.scalar("noise"), 0.0};
  ad::Tape tape(false);
  fit.lml = objective(tape).scalar();
  return fit;
}

inline svgp::KernelFn exact_kernel(const ExactFit &fit, const augment::OrbitSpec &orbit) {
  kernels::InvariantKernelSpec spec;
  spec.base = fit.base;
  spec.sampler = augment::AugmentationSampler::finite(orbit, augment::SampleMode::without_replacement);
  spec.S = orbit.P;
  return svgp::invariant_kernel(spec);
}

// ---------------------------------------------------------------------------
// Toy demonstration: symmetric function seen on one half of the plane

struct ToyDemo {
  ExactFit rbf;
  ExactFit invariant;
  double rmse_rbf = 0.0;
  double rmse_invariant = 0.0;
  /// Chunked decomposition of the invariant model's LML.
  std::vector<Eigen::Index> chunk_sizes;
  std::vector<double> chunk_terms;
  double chunk_sum = 0.0;
  double invariant_lml_direct = 0.0;
};

inline ToyDemo toy_demo(std::uint64_t seed = 0, Eigen::Index n_train = 50, Eigen::Index n_test = 500) {
  const ToyProblem toy = make_toy(n_train, n_test, 0.1, seed);
  const auto plain = augment::OrbitSpec::identity();
  const auto swap = augment::OrbitSpec::coordinate_swap();
  ToyDemo d;
  d.rbf = fit_exact(toy.X_train, toy.y_train, plain);
  d.invariant = fit_exact(toy.X_train, toy.y_train, swap);
  auto rmse = [&](const ExactFit &fit, const augment::OrbitSpec &orbit) {
    const auto pred = svgp::exact_predict(toy.X_train, toy.y_train, toy.X_test, exact_kernel(fit, orbit), fit.noise);
    return std::sqrt((pred.mean - toy.f_test).squaredNorm() / static_cast<double>(n_test));
  };
  d.rmse_rbf = rmse(d.rbf, plain);
  d.rmse_invariant = rmse(d.invariant, swap);
  const auto k = exact_kernel(d.invariant, swap);
  d.invariant_lml_direct = svgp::exact_lml(toy.X_train, toy.y_train, k, d.invariant.noise);
  for (Eigen::Index left = n_train, size = 1; left > 0; left -= size, size *= 2) d.chunk_sizes.push_back(std::min(size, left));
  d.chunk_terms = svgp::chunked_lml(toy.X_train, toy.y_train, k, d.invariant.noise, d.chunk_sizes);
  for (double t : d.chunk_terms) d.chunk_sum += t;
  return d;
}

// ---------------------------------------------------------------------------
// Estimator unbiasedness

struct EstimatorCheck {
  std::string quantity;
  std::string mode;
  Eigen::Index S = 0;
  double mean = 0.0;
  double se = 0.0;
  double exact = 0.0;
  bool pass = false;
};

/// Sample means of k_f(x,x), the predictive mean, its square and the
/// predictive variance estimators over `draws` independent draws, against the
/// values from full-orbit sums, for a rotation_grid orbit of 8 on R^8.
inline std::vector<EstimatorCheck> estimator_check(int draws = 20000, std::uint64_t seed = 0) {
  using augment::SampleMode;
  RngStream rng(seed, {"estimator-check"});
  const Eigen::Index D = 8, M = 4;
  const Vector x = draw(rng, DrawKind::standard_normal, D);
  const Matrix Z = draw_matrix(rng, DrawKind::standard_normal, M, D);
  const Matrix m = draw_matrix(rng, DrawKind::standard_normal, M, 1);
  Matrix Lq = 0.3 * draw_matrix(rng, DrawKind::standard_normal, M, M);
  Lq = Lq.triangularView<Eigen::Lower>();
  Lq.diagonal() = Lq.diagonal().cwiseAbs().array() + 0.2;

  std::vector<EstimatorCheck> out;
  for (const SampleMode mode : {SampleMode::iid, SampleMode::without_replacement}) {
    for (const Eigen::Index S : {2, 3}) {
      svgp::ModelConfig cfg;
      cfg.kernel.base = {1.5, 2.5};
      cfg.kernel.sampler = augment::AugmentationSampler::finite(augment::OrbitSpec::rotation_grid(8), mode);
      cfg.kernel.S = S;
      cfg.M = M;
      svgp::GpModel model = svgp::init_model(cfg, Z);
      model.params.set_value(svgp::names::inducing, Z);
      model.params.set_value(svgp::names::q_mean, m);
      svgp::set_q_sqrt(model, 0, Lq);

      // Values from full orbits.
      const auto &spec = cfg.kernel;
      const CholFactor K = cholesky(kernels::rbf_gram(Z, Z, spec.base));
      Vector kfu(M);
      for (Eigen::Index j = 0; j < M; ++j) kfu[j] = kernels::kfu_exact(x, Z.row(j).transpose(), spec);
      const Vector a = chol_solve(K, kfu);
      const double mu = a.dot(m.col(0));
      const double var = kernels::kf_exact(x, x, spec) - kfu.dot(a) + (Lq.transpose() * a).squaredNorm();

      // Draw r uses stream child r; rows of the replicated input are independent.
      const Matrix X = x.transpose().replicate(draws, 1);
      const svgp::MomentEstimates est = svgp::moments(model, X, RngStream(seed, {"draws"}));
      std::vector<double> kf(static_cast<std::size_t>(draws));
      const RngStream root(seed, {"kf"});
      ad::ParameterSet none;
      for (int r = 0; r < draws; ++r) {
        const auto set = kernels::draw_samples(x, spec, none, root.child(std::to_string(r)));
        kf[static_cast<std::size_t>(r)] = kernels::double_estimate(set, kernels::rbf_gram(set.samples, set.samples, spec.base));
      }
      auto summarise = [&](std::string name, const Vector &v, double exact) {
        EstimatorCheck c{std::move(name), mode == SampleMode::iid ? "iid" : "without_replacement", S, v.mean(), 0.0,
                         exact, false};
        const double n = static_cast<double>(v.size());
        c.se = std::sqrt((v.array() - c.mean).square().sum() / (n - 1.0) / n);
        c.pass = std::abs(c.mean - exact) <= 3.0 * c.se + 1e-12;
        out.push_back(c);
      };
      summarise("k_f(x,x)", Eigen::Map<const Vector>(kf.data(), draws), kernels::kf_exact(x, x, spec));
      summarise("mean", est.mean.col(0), mu);
      summarise("mean_sq", est.mean_sq.col(0), mu * mu);
      summarise("var", est.var.col(0), var);
    }
  }
  return out;
}

} // namespace igp::harness
