#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "igp/autodiff/adam.hpp"
#include "igp/autodiff/check_grad.hpp"
#include "igp/svgp/elbo.hpp"
#include "igp/svgp/exact.hpp"

using namespace igp;
using namespace igp::svgp;
using augment::AugmentationSampler;
using augment::OrbitSpec;
using augment::SampleMode;

namespace {

Matrix random_inputs(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  RngStream rng(seed, {"inputs"});
  return draw_matrix(rng, DrawKind::standard_normal, n, d);
}

Matrix random_lower(Eigen::Index M, std::uint64_t seed, double scale) {
  RngStream rng(seed, {"lower"});
  Matrix L = scale * Matrix(draw_matrix(rng, DrawKind::standard_normal, M, M).triangularView<Eigen::Lower>());
  L.diagonal() = L.diagonal().cwiseAbs().array() + 0.3 * scale;
  return L;
}

GpModel make_model(const AugmentationSampler &sampler, Eigen::Index S, const Matrix &X, Eigen::Index M,
                   Eigen::Index outputs = 1, bool whiten = false, std::uint64_t seed = 0) {
  ModelConfig cfg;
  cfg.kernel.base = {1.2, 1.3};
  cfg.kernel.sampler = sampler;
  cfg.kernel.S = S;
  cfg.M = M;
  cfg.outputs = outputs;
  cfg.whiten = whiten;
  cfg.noise_variance = 0.2;
  cfg.seed = seed;
  return init_model(cfg, X);
}

// Randomises q so that tests exercise non-trivial means and covariances.
void randomise_q(GpModel &model, std::uint64_t seed) {
  RngStream rng(seed, {"q"});
  model.params.set_value(names::q_mean, draw_matrix(rng, DrawKind::standard_normal, model.M(), model.outputs()));
  for (Eigen::Index c = 0; c < model.outputs(); ++c) set_q_sqrt(model, c, random_lower(model.M(), seed + c, 0.4));
}

// Dense inter-domain moments from exhaustive orbit sums.
struct DenseMoments {
  Vector mean, var;
};

DenseMoments dense_moments(const GpModel &model, const Matrix &X, Eigen::Index c) {
  const kernels::InvariantKernelSpec spec{model.base(), model.sampler(), 1};
  const Matrix Z = model.Z();
  const KuuFactor K = kuu(Z, model.base());
  const Matrix Lq = q_sqrt_value(model, c);
  const Matrix Kinv = chol_solve(K.chol, Matrix::Identity(Z.rows(), Z.rows()));
  const Matrix Sigma = Lq * Lq.transpose();
  const Vector m = model.params.value(names::q_mean).col(c);
  DenseMoments out{Vector(X.rows()), Vector(X.rows())};
  for (Eigen::Index n = 0; n < X.rows(); ++n) {
    Vector k(Z.rows());
    for (Eigen::Index j = 0; j < Z.rows(); ++j) k[j] = kernels::kfu_exact(X.row(n).transpose(), Z.row(j).transpose(), spec);
    out.mean[n] = k.dot(Kinv * m);
    out.var[n] = kernels::kf_exact(X.row(n).transpose(), X.row(n).transpose(), spec) - k.dot(Kinv * k) +
                 k.dot(Kinv * Sigma * Kinv * k);
  }
  return out;
}

} // namespace

TEST(Kuu, SingleInducingPoint) {
  const auto f = kuu(Matrix::Constant(1, 3, 0.5), {2.5, 1.0});
  EXPECT_DOUBLE_EQ(f.K(0, 0), 2.5);
}

TEST(Kuu, RandomGramIsSymmetricWithVarianceDiagonal) {
  const auto f = kuu(random_inputs(5, 3, 1), {1.7, 0.9});
  EXPECT_LT((f.K - f.K.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((f.K.diagonal().array() - 1.7).abs().maxCoeff(), 1e-15);
}

TEST(Kuu, DuplicateInducingPointsAreRejected) {
  Matrix Z = random_inputs(4, 3, 2);
  Z.row(3) = Z.row(1);
  try {
    kuu(Z, {1.0, 1.0});
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::NotPositiveDefinite);
  }
}

TEST(Kl, ClosedFormValues) {
  const CholFactor one = cholesky(Matrix::Ones(1, 1));
  EXPECT_NEAR(kl_gaussian(Vector::Ones(1), Matrix::Ones(1, 1), one), 0.5, 1e-15);
  const Matrix K = kuu(random_inputs(6, 2, 3), {1.0, 1.0}).K;
  const CholFactor f = cholesky(K);
  EXPECT_NEAR(kl_gaussian(Vector::Zero(6), f.L, f), 0.0, 1e-10);
}

TEST(Kl, NonNegativeOverRandomConfigurations) {
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index M = 1 + trial % 7;
    const CholFactor f = cholesky(kuu(random_inputs(M, 2, 100 + trial), {0.5 + 0.01 * trial, 1.0}).K);
    RngStream rng(trial, {"kl"});
    const Vector m = draw(rng, DrawKind::standard_normal, M);
    EXPECT_GE(kl_gaussian(m, random_lower(M, trial, 0.5), f), -1e-10);
  }
}

TEST(Kl, TapeMatchesPlainFormulaInBothParameterisations) {
  const Matrix X = random_inputs(12, 2, 4);
  for (bool whiten : {false, true}) {
    GpModel model = make_model(AugmentationSampler::identity(), 1, X, 6, 2, whiten);
    randomise_q(model, 7);
    ad::Tape t(false);
    const double kl = kl_qu(t, model, bind_prior(t, model)).scalar();
    const KuuFactor K = kuu(model.Z(), model.base());
    double expected = 0.0;
    for (Eigen::Index c = 0; c < 2; ++c) {
      Vector m = model.params.value(names::q_mean).col(c);
      Matrix Lq = q_sqrt_value(model, c);
      if (whiten) {
        m = K.chol.L * m;
        Lq = K.chol.L * Lq;
      }
      expected += kl_gaussian(m, Lq, K.chol);
    }
    EXPECT_NEAR(kl, expected, 1e-9) << whiten;
  }
}

TEST(Moments, FullOrbitMatchesDenseInterDomainMoments) {
  const Matrix X = random_inputs(7, 4, 5);
  const auto sampler = AugmentationSampler::finite(OrbitSpec::rotation_grid(4), SampleMode::without_replacement);
  GpModel model = make_model(sampler, 4, X, 5, 2);
  randomise_q(model, 9);
  const MomentEstimates est = moments(model, X, RngStream(1));
  for (Eigen::Index c = 0; c < 2; ++c) {
    const DenseMoments d = dense_moments(model, X, c);
    EXPECT_LT((est.mean.col(c) - d.mean).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((est.mean_sq.col(c) - d.mean.cwiseProduct(d.mean)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((est.var.col(c) - d.var).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Moments, PriorQRecoversPriorMoments) {
  const Matrix X = random_inputs(6, 2, 6);
  const auto sampler = AugmentationSampler::finite(OrbitSpec::coordinate_swap(), SampleMode::without_replacement);
  GpModel model = make_model(sampler, 2, X, 4);
  set_q_sqrt(model, 0, kuu(model.Z(), model.base()).chol.L);
  const MomentEstimates est = moments(model, X, RngStream(1));
  const kernels::InvariantKernelSpec spec{model.base(), sampler, 2};
  for (Eigen::Index n = 0; n < X.rows(); ++n) {
    EXPECT_NEAR(est.mean(n, 0), 0.0, 1e-14);
    EXPECT_NEAR(est.var(n, 0), kernels::kf_exact(X.row(n).transpose(), X.row(n).transpose(), spec), 1e-8);
  }
}

TEST(Moments, ZeroWidthAffineMatchesPlainSvgpAtCentre) {
  const augment::ImageShape shape{5, 5};
  const Matrix X = (random_inputs(4, 25, 7).array() * 0.3 + 0.5).matrix();
  ModelConfig cfg;
  cfg.kernel.base = {1.0, 3.0};
  cfg.kernel.sampler = AugmentationSampler::affine(augment::AffineMode::full_affine, shape);
  cfg.kernel.S = 3;
  cfg.M = 3;
  cfg.affine_init.centre << 0.05, 0.02, -0.1, 0.0, -0.03, 0.08;
  cfg.affine_init.halfwidth_raw.setConstant(-60.0);
  GpModel model = init_model(cfg, X);
  randomise_q(model, 3);
  const MomentEstimates est = moments(model, X, RngStream(2));

  Matrix Xw(X.rows(), X.cols());
  for (Eigen::Index n = 0; n < X.rows(); ++n) {
    const augment::Image img(shape, X.row(n).transpose());
    Xw.row(n) = augment::warp(img, augment::affine_matrix(cfg.affine_init.centre)).pixels.transpose();
  }
  ModelConfig plain = cfg;
  plain.kernel.sampler = AugmentationSampler::identity();
  plain.kernel.S = 1;
  GpModel ref = init_model(plain, X);
  ref.params.set_value(names::inducing, model.Z());
  ref.params.set_value(names::q_mean, model.params.value(names::q_mean));
  set_q_sqrt(ref, 0, q_sqrt_value(model, 0));
  const MomentEstimates expected = moments(ref, Xw, RngStream(2));
  EXPECT_LT((est.mean - expected.mean).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((est.mean_sq - expected.mean_sq).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((est.var - expected.var).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Moments, WhitenedAndUnwhitenedAgreeUnderTheMatchingMap) {
  const Matrix X = random_inputs(6, 2, 8);
  const auto sampler = AugmentationSampler::finite(OrbitSpec::coordinate_swap(), SampleMode::without_replacement);
  GpModel w = make_model(sampler, 2, X, 4, 1, true);
  randomise_q(w, 4);
  GpModel u = make_model(sampler, 2, X, 4, 1, false);
  const Matrix L = kuu(w.Z(), w.base()).chol.L;
  u.params.set_value(names::q_mean, L * w.params.value(names::q_mean));
  set_q_sqrt(u, 0, L * q_sqrt_value(w, 0));
  const MomentEstimates a = moments(w, X, RngStream(0)), b = moments(u, X, RngStream(0));
  EXPECT_LT((a.mean - b.mean).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((a.var - b.var).cwiseAbs().maxCoeff(), 1e-10);
  const Matrix Y = random_inputs(6, 1, 9);
  EXPECT_NEAR(elbo_gaussian(w, X, Y, 6, RngStream(0)).elbo, elbo_gaussian(u, X, Y, 6, RngStream(0)).elbo, 1e-9);
}

TEST(Elbo, WrongLikelihoodIsRejected) {
  const Matrix X = random_inputs(4, 2, 10);
  ModelConfig cfg;
  cfg.M = 2;
  cfg.likelihood = Likelihood::logistic_pg;
  GpModel model = init_model(cfg, X);
  try {
    elbo_gaussian(model, X, Matrix::Zero(4, 1), 4, RngStream(0));
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::WrongLikelihood);
  }
}

TEST(Elbo, BelowExactMarginalLikelihoodInFullOrbitMode) {
  const Matrix X = random_inputs(10, 2, 11);
  const auto sampler = AugmentationSampler::finite(OrbitSpec::coordinate_swap(), SampleMode::without_replacement);
  const kernels::InvariantKernelSpec spec{{1.2, 1.3}, sampler, 2};
  Vector y(10);
  for (Eigen::Index n = 0; n < 10; ++n) y[n] = std::sin(X(n, 0) + X(n, 1)) + X(n, 0) * X(n, 1);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    GpModel model = make_model(sampler, 2, X, 10);
    randomise_q(model, seed);
    const double elbo = elbo_gaussian(model, X, Matrix(y), 10, RngStream(seed)).elbo;
    EXPECT_LE(elbo, exact_lml(X, y, invariant_kernel(spec), 0.2) + 1e-6);
  }
}

TEST(Elbo, EstimateIsUnbiasedForTheFullOrbitValue) {
  const Matrix X = random_inputs(5, 2, 12);
  const auto full = AugmentationSampler::finite(OrbitSpec::rotation_grid(5), SampleMode::without_replacement);
  GpModel model = make_model(full, 5, X, 4);
  randomise_q(model, 5);
  const Matrix Y = random_inputs(5, 1, 13);
  const double exact = elbo_gaussian(model, X, Y, 5, RngStream(0)).elbo;
  for (SampleMode mode : {SampleMode::iid, SampleMode::without_replacement}) {
    GpModel est = model;
    est.config.kernel.sampler.mode = mode;
    est.config.kernel.S = 2;
    const int R = 10000;
    double s1 = 0, s2 = 0;
    for (int r = 0; r < R; ++r) {
      const double v = elbo_gaussian(est, X, Y, 5, RngStream(77, {"seed", std::to_string(r)})).elbo;
      s1 += v;
      s2 += v * v;
    }
    const double mean = s1 / R, se = std::sqrt((s2 / R - mean * mean) / R);
    EXPECT_LT(std::abs(mean - exact), 3.0 * se) << static_cast<int>(mode);
  }
}

TEST(Elbo, GradientsOfEveryTrainable) {
  const augment::ImageShape shape{5, 5};
  const Matrix X = (random_inputs(4, 25, 14).array() * 0.3 + 0.5).matrix();
  const auto affine = AugmentationSampler::affine(augment::AffineMode::full_affine, shape);
  const auto elastic = AugmentationSampler::elastic(1.0, shape);
  for (bool whiten : {false, true}) {
    ModelConfig cfg;
    cfg.kernel.base = {1.0, 2.5};
    cfg.kernel.sampler = AugmentationSampler::composite({affine, elastic});
    cfg.kernel.S = 2;
    cfg.M = 3;
    cfg.outputs = 2;
    cfg.whiten = whiten;
    cfg.affine_init.centre.setConstant(0.02);
    cfg.affine_init.halfwidth_raw.setConstant(softplus_inverse(0.08));
    cfg.elastic_amplitude_init = 0.2;
    GpModel model = init_model(cfg, X);
    randomise_q(model, 6);
    const Matrix Y = random_inputs(4, 2, 15);
    const ad::LossFn loss = [&](ad::Tape &t, const ad::ParameterSet &ps, const RngStream &s) {
      GpModel m = model;
      m.params = ps;
      return elbo_gaussian(t, m, X, Y, 40, s).elbo;
    };
    ad::GradCheckOptions opts;
    opts.eps = 1e-6;
    const auto rep = ad::check_grad(loss, model.params, RngStream(3, {"grad"}), opts);
    EXPECT_LT(rep.max_rel_error, 1e-4) << rep.worst_param << "[" << rep.worst_index << "] " << rep.analytic << " vs "
                                       << rep.numeric;
  }
}

TEST(Predict, PriorModelHasZeroMean) {
  const Matrix X = random_inputs(5, 2, 16);
  GpModel model = make_model(AugmentationSampler::identity(), 1, X, 3);
  const Prediction p = predict(model, random_inputs(4, 2, 17), 1, RngStream(0));
  EXPECT_LT(p.mean.cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_GT(p.var.minCoeff(), 0.2);
}

TEST(Predict, StrictOrbitPredictionsAreInvariant) {
  const Matrix X = random_inputs(6, 4, 18);
  const auto sampler = AugmentationSampler::finite(OrbitSpec::rotation_grid(4), SampleMode::iid);
  GpModel model = make_model(sampler, 2, X, 4);
  randomise_q(model, 8);
  const Matrix Xs = random_inputs(5, 4, 19);
  Matrix Xt(5, 4);
  for (Eigen::Index n = 0; n < 5; ++n) Xt.row(n) = augment::orbit_points(Xs.row(n).transpose(), sampler.orbit)[1].transpose();
  const Prediction a = predict(model, Xs, 3, RngStream(0)), b = predict(model, Xt, 3, RngStream(5));
  EXPECT_LT((a.mean - b.mean).cwiseAbs().maxCoeff(), 1e-12) << a.mean.transpose() << "\n" << b.mean.transpose();
  EXPECT_LT((a.var - b.var).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Predict, FittedIdentityModelInterpolatesAtInducingPoints) {
  const Matrix X = random_inputs(8, 2, 20);
  Vector y(8);
  for (Eigen::Index n = 0; n < 8; ++n) y[n] = std::cos(X(n, 0)) + 0.5 * X(n, 1);
  ModelConfig cfg;
  cfg.kernel.base = {1.0, 1.0};
  cfg.M = 8;
  cfg.noise_variance = 1e-4;
  cfg.train_inducing = false;
  cfg.train_kernel = false;
  cfg.train_noise = false;
  GpModel model = init_model(cfg, X);
  // Optimal q for fixed Z = X is the exact posterior over g(Z).
  const KuuFactor K = kuu(model.Z(), model.base());
  Matrix Kn = K.K;
  Kn.diagonal().array() += 1e-4;
  Vector yz(8);
  for (Eigen::Index m = 0; m < 8; ++m) {
    for (Eigen::Index n = 0; n < 8; ++n) if (model.Z().row(m) == X.row(n)) yz[m] = y[n];
  }
  model.params.set_value(names::q_mean, K.K * chol_solve(cholesky(Kn), Matrix(yz)));
  const Prediction p = predict(model, model.Z(), 1, RngStream(0));
  EXPECT_LT((p.mean.col(0) - yz).cwiseAbs().maxCoeff(), 1e-2);
}

TEST(Exact, HandComputableValues) {
  const KernelFn zero = [](const Matrix &A, const Matrix &B) { return Matrix::Zero(A.rows(), B.rows()).eval(); };
  EXPECT_NEAR(exact_lml(Matrix::Zero(1, 1), Vector::Zero(1), zero, 1.0), -0.5 * std::log(2.0 * std::numbers::pi),
              1e-15);
  Matrix X(2, 1);
  X << 0.0, 1.0;
  Vector y(2);
  y << 0.3, -0.7;
  const double k = std::exp(-0.5), a = 1.0 + 0.1, det = a * a - k * k;
  const double quad = (a * y[0] * y[0] - 2 * k * y[0] * y[1] + a * y[1] * y[1]) / det;
  const double expected = -0.5 * quad - 0.5 * std::log(det) - std::log(2.0 * std::numbers::pi);
  EXPECT_NEAR(exact_lml(X, y, rbf_kernel({1.0, 1.0}), 0.1), expected, 1e-13);
}

TEST(Exact, ChunkedConditionalsSumToTheMarginal) {
  const Matrix X = random_inputs(12, 2, 21);
  const Vector y = random_inputs(12, 1, 22);
  const auto k = rbf_kernel({1.1, 0.8});
  const double lml = exact_lml(X, y, k, 0.3);
  const auto one = chunked_lml(X, y, k, 0.3, {12});
  EXPECT_NEAR(one[0], lml, 1e-12);
  for (const std::vector<Eigen::Index> &sizes : {std::vector<Eigen::Index>{6, 6}, {1, 4, 7}, {3, 3, 3, 3}}) {
    double s = 0.0;
    for (double v : chunked_lml(X, y, k, 0.3, sizes)) s += v;
    EXPECT_NEAR(s, lml, 1e-9);
  }
  EXPECT_THROW(chunked_lml(X, y, k, 0.3, {5, 5}), Error);
}

TEST(Exact, DifferentiableLmlMatchesDenseOracle) {
  const Matrix X = random_inputs(9, 2, 23);
  const Vector y = random_inputs(9, 1, 24);
  ad::ParameterSet p;
  p.add_scalar("var", 1.4, ad::Transform::softplus);
  p.add_scalar("ls", 0.9, ad::Transform::softplus);
  p.add_scalar("noise", 0.2, ad::Transform::softplus);
  for (const auto &orbit : {OrbitSpec::identity(), OrbitSpec::coordinate_swap()}) {
    const ad::LossFn fn = [&](ad::Tape &t, const ad::ParameterSet &ps, const RngStream &) {
      return exact_lml(t, X, y, orbit, t.bind(ps, "var"), t.bind(ps, "ls"), t.bind(ps, "noise"));
    };
    const kernels::InvariantKernelSpec spec{{1.4, 0.9}, AugmentationSampler::finite(orbit, SampleMode::iid), 2};
    EXPECT_NEAR(ad::evaluate_loss(fn, p, RngStream(0)), exact_lml(X, y, invariant_kernel(spec), 0.2), 1e-10);
    EXPECT_LT(ad::check_grad(fn, p, RngStream(0), {1e-6, {}, 0}).max_rel_error, 1e-6);
  }
}

TEST(Training, FullBatchAdamIsNearlyMonotone) {
  // symmetric target observed on one half of the square
  RngStream rng(30, {"toy"});
  Matrix X(30, 2);
  Vector y(30);
  for (Eigen::Index n = 0; n < 30; ++n) {
    double a = 6 * rng.uniform() - 3, b = 6 * rng.uniform() - 3;
    if (a < b) std::swap(a, b);
    X.row(n) << a, b;
    y[n] = std::exp(-0.1 * (a * a + b * b)) * std::cos(a) * std::cos(b);
  }
  const auto sampler = AugmentationSampler::finite(OrbitSpec::coordinate_swap(), SampleMode::without_replacement);
  GpModel model = make_model(sampler, 2, X, 12);
  ad::Adam adam({1e-3});
  double prev = -1e300;
  int bad = 0;
  const int steps = 400;
  for (int step = 0; step < steps; ++step) {
    ad::Tape tape;
    const auto e = elbo_gaussian(tape, model, X, Matrix(y), 30, RngStream(1));
    if (e.elbo.scalar() < prev - 1e-3) ++bad;
    prev = e.elbo.scalar();
    adam.step(model.params, tape.backward(ad::neg(e.elbo)));
  }
  EXPECT_LE(bad, steps / 20);
}
