#pragma once

#include <numbers>

#include "igp/svgp/elbo.hpp"

namespace igp::pgclassify {

using svgp::GpModel;

namespace names {
inline const std::string W1 = "recog/W1";
inline const std::string b1 = "recog/b1";
inline const std::string w2 = "recog/w2";
inline const std::string b2 = "recog/b2";
} // namespace names

/// Recognition network (inputs, label) -> tanh hidden layer -> softplus tilt.
/// Weights start at N(0, 1/fan_in), biases at zero.
inline void add_recognition_net(ad::ParameterSet &params, Eigen::Index input_dim, Eigen::Index hidden = 128,
                                std::uint64_t seed = 0, bool trainable = true) {
  RngStream stream(seed, {"init", "recognition"});
  const double s1 = 1.0 / std::sqrt(static_cast<double>(input_dim + 1));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  params.add(names::W1, s1 * draw_matrix(stream, DrawKind::standard_normal, input_dim + 1, hidden),
             ad::Transform::identity, trainable);
  params.add(names::b1, Matrix::Zero(1, hidden), ad::Transform::identity, trainable);
  params.add(names::w2, s2 * draw_matrix(stream, DrawKind::standard_normal, hidden, 1), ad::Transform::identity,
             trainable);
  params.add(names::b2, Matrix::Zero(1, 1), ad::Transform::identity, trainable);
}

/// Tilt parameters c >= 0 for each row of X with labels y in {-1, +1}.
inline ad::Var recog_forward(ad::Tape &tape, const ad::ParameterSet &params, const Matrix &X, const Vector &y) {
  if (y.size() != X.rows()) fail(ErrorCode::ShapeMismatch, "recog_forward: one label per input");
  Matrix in(X.rows(), X.cols() + 1);
  in << X, y;
  const ad::Var W1 = tape.bind(params, names::W1);
  if (W1.rows() != in.cols()) fail(ErrorCode::ShapeMismatch, "recog_forward: input width does not match the network");
  const ad::Var h = ad::tanh(ad::add(ad::matmul(tape.constant(std::move(in)), W1),
                                     ad::broadcast_rows(tape.bind(params, names::b1), X.rows())));
  const ad::Var out = ad::add(ad::matmul(h, tape.bind(params, names::w2)),
                              ad::broadcast_rows(tape.bind(params, names::b2), X.rows()));
  return ad::softplus(out);
}

inline Vector recog_forward(const ad::ParameterSet &params, const Matrix &X, const Vector &y) {
  ad::Tape tape(false);
  return recog_forward(tape, params, X, y).value();
}

/// Lower bound on E[log sigmoid(y f)] for f with the given (estimated) moments:
/// y mu / 2 - log 2 - pg_mean(c) (mu^2 + sigma^2) / 2 - pg_kl(c).
inline double expected_loglik_pg(double mean, double mean_sq, double var, double y, double c) {
  return 0.5 * y * mean - std::numbers::ln2 - 0.5 * pg_mean(c) * (mean_sq + var) - pg_kl(c);
}

/// Batch sum of the bound; all arguments N x 1.
inline ad::Var expected_loglik_pg(const ad::Var &mean, const ad::Var &mean_sq, const ad::Var &var, const Vector &y,
                                  const ad::Var &c) {
  const double n = static_cast<double>(y.size());
  const ad::Var linear = ad::mul_const(mean, 0.5 * Matrix(y));
  const ad::Var quad = ad::scale(ad::mul(ad::pg_mean(c), ad::add(mean_sq, var)), 0.5);
  const ad::Var terms = ad::sub(ad::sub(linear, quad), ad::pg_kl(c));
  return ad::add_scalar(ad::sum(terms), -n * std::numbers::ln2);
}

/// E[log sigmoid(y f)] under N(mean, var) by Gauss-Hermite quadrature.
inline double expected_log_sigmoid(double mean, double var, double y, const GaussHermite &gh) {
  return gaussian_expectation(gh, mean, var, [y](double f) { return log_sigmoid(y * f); });
}

/// Minibatch PG-ELBO: (N/Nb) * sum of per-point bounds minus KL. Labels are
/// in {-1, +1}; tilts come from the recognition network in `model.params`.
inline svgp::ElboVars elbo_logistic(ad::Tape &tape, const GpModel &model, const Matrix &X, const Vector &y,
                                    Eigen::Index N_total, const RngStream &stream) {
  if (model.config.likelihood != svgp::Likelihood::logistic_pg) {
    fail(ErrorCode::WrongLikelihood, "elbo_logistic needs the logistic likelihood");
  }
  if (y.size() != X.rows()) fail(ErrorCode::ShapeMismatch, "elbo_logistic: one label per input");
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] != 1.0 && y[i] != -1.0) fail(ErrorCode::BadConfig, "elbo_logistic: labels must be -1 or +1");
  }
  const svgp::PriorVars prior = svgp::bind_prior(tape, model);
  const svgp::MomentVars mv =
      svgp::moments(tape, model, prior, X, model.sampler(), model.config.kernel.S, stream);
  const ad::Var c = recog_forward(tape, model.params, X, y);
  svgp::ElboVars out;
  const double scale = static_cast<double>(N_total) / static_cast<double>(X.rows());
  out.data_fit = ad::scale(expected_loglik_pg(mv.mean, mv.mean_sq, mv.var, y, c), scale);
  out.kl = svgp::kl_qu(tape, model, prior);
  out.elbo = ad::sub(out.data_fit, out.kl);
  return out;
}

inline svgp::ElboTerms elbo_logistic(const GpModel &model, const Matrix &X, const Vector &y, Eigen::Index N_total,
                                     const RngStream &stream) {
  ad::Tape tape(false);
  return svgp::values(elbo_logistic(tape, model, X, y, N_total, stream));
}

/// P(y = +1 | x) = E[sigmoid(f)] under the predictive latent, 32-point
/// Gauss-Hermite.
inline double sigmoid_expectation(double mean, double var, const GaussHermite &gh) {
  return gaussian_expectation(gh, mean, std::max(var, 1e-12), [](double f) { return sigmoid(f); });
}

inline Vector predict_proba(const GpModel &model, const Matrix &Xs, Eigen::Index S_pred, const RngStream &stream) {
  const svgp::Prediction p = svgp::predict(model, Xs, S_pred, stream, false);
  const GaussHermite gh = gauss_hermite(32);
  Vector out(Xs.rows());
  for (Eigen::Index i = 0; i < Xs.rows(); ++i) out[i] = sigmoid_expectation(p.mean(i, 0), p.var(i, 0), gh);
  return out;
}

} // namespace igp::pgclassify
