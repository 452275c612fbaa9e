#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numbers>
#include <ostream>
#include <string>

#include "igp/autodiff/adam.hpp"
#include "igp/harness/checkpoint.hpp"
#include "igp/harness/config.hpp"
#include "igp/harness/dataset.hpp"
#include "igp/harness/metrics.hpp"
#include "igp/pgclassify/pgclassify.hpp"

namespace igp::harness {

/// Inputs and targets of one task. Gaussian tasks use N x C targets (one-hot
/// for classification); the binary task uses a single column of -1/+1.
struct TaskData {
  Dataset train;
  Dataset test;
  Matrix Y_train;
  Matrix Y_test;
};

inline bool is_toy(const ExperimentConfig &c) { return c.task == "toy_symmetric"; }
inline bool is_binary(const ExperimentConfig &c) { return c.task == "binary_oddeven"; }

inline augment::ImageShape task_shape(const ExperimentConfig &c) {
  return is_toy(c) ? augment::ImageShape{} : augment::ImageShape{28, 28};
}
inline Eigen::Index task_dim(const ExperimentConfig &c) { return is_toy(c) ? 2 : 784; }
inline Eigen::Index task_outputs(const ExperimentConfig &c) { return is_toy(c) || is_binary(c) ? 1 : 10; }

inline std::string data_root(const ExperimentConfig &c) {
  if (!c.data_root.empty()) return c.data_root;
  if (const char *env = std::getenv("IGP_DATA_ROOT"); env != nullptr && *env != '\0') return env;
  fail(ErrorCode::IoError, "no data root: set IGP_DATA_ROOT or data.root");
}

inline TaskData load_task(const ExperimentConfig &c) {
  TaskData d;
  if (is_toy(c)) {
    const ToyProblem toy = make_toy(c.n_train > 0 ? c.n_train : 50, c.n_test > 0 ? c.n_test : 500, 0.1, c.data_seed);
    d.train.X = toy.X_train;
    d.train.provenance = "toy_symmetric seed=" + std::to_string(c.data_seed);
    d.test.X = toy.X_test;
    d.test.split = "test";
    d.test.provenance = d.train.provenance + ";mirrored half";
    d.Y_train = toy.y_train;
    d.Y_test = toy.f_test;
    return d;
  }
  const std::string root = data_root(c);
  d.train = head(load_mnist(root, "train"), c.n_train);
  d.test = head(load_mnist(root, "test"), c.n_test);
  if (c.alpha_true_deg != 0.0) {
    d.train = make_rotated(d.train, c.alpha_true_deg, c.data_seed).data;
    d.test = make_rotated(d.test, c.alpha_true_deg, c.data_seed + 1).data;
  }
  if (is_binary(c)) {
    d.train = odd_even(d.train);
    d.test = odd_even(d.test);
    d.Y_train = signed_labels(d.train.labels);
    d.Y_test = signed_labels(d.test.labels);
  } else {
    d.Y_train = one_hot(d.train.labels, 10);
    d.Y_test = one_hot(d.test.labels, 10);
  }
  return d;
}

inline augment::AugmentationSampler make_sampler(const ExperimentConfig &c) {
  using augment::AugmentationSampler;
  const auto shape = task_shape(c);
  if (c.sampler == "identity") return AugmentationSampler::identity();
  if (c.sampler == "swap") {
    return AugmentationSampler::finite(augment::OrbitSpec::coordinate_swap(), augment::SampleMode::without_replacement);
  }
  if (c.sampler == "rotation") return AugmentationSampler::affine(augment::AffineMode::rotation_only, shape);
  if (c.sampler == "affine") return AugmentationSampler::affine(augment::AffineMode::full_affine, shape);
  if (c.sampler == "elastic") return AugmentationSampler::elastic(c.elastic_smoothness, shape);
  return AugmentationSampler::composite({AugmentationSampler::affine(augment::AffineMode::full_affine, shape),
                                         AugmentationSampler::elastic(c.elastic_smoothness, shape)});
}

inline svgp::ModelConfig model_config(const ExperimentConfig &c) {
  svgp::ModelConfig m;
  m.kernel.base = {c.kernel_variance, c.kernel_lengthscale};
  m.kernel.sampler = make_sampler(c);
  // The identity orbit has a single element.
  m.kernel.S = c.sampler == "identity" ? 1 : c.S;
  m.M = c.M;
  m.outputs = task_outputs(c);
  m.likelihood = is_binary(c) ? svgp::Likelihood::logistic_pg : svgp::Likelihood::gaussian;
  m.noise_variance = c.noise_variance;
  m.whiten = c.whiten;
  m.q_scale = c.q_scale;
  m.train_augmentation = c.train_augmentation;
  if (c.sampler == "rotation") {
    m.affine_init = augment::AffineBounds::rotation(c.init_angle_deg * std::numbers::pi / 180.0);
  } else {
    m.affine_init.halfwidth_raw.setConstant(softplus_inverse(c.init_halfwidth));
  }
  m.elastic_amplitude_init = c.elastic_amplitude;
  m.seed = c.seed;
  return m;
}

inline svgp::GpModel build_model(const ExperimentConfig &c, const Matrix &X_train) {
  if (X_train.cols() != task_dim(c)) fail(ErrorCode::ShapeMismatch, "training inputs do not match the task");
  svgp::GpModel model = svgp::init_model(model_config(c), X_train);
  if (is_binary(c)) pgclassify::add_recognition_net(model.params, X_train.cols(), c.recog_hidden, c.seed);
  return model;
}

inline ad::Adam make_adam(const ExperimentConfig &c) {
  ad::AdamOptions o;
  o.lr = c.lr;
  o.bounds_lr = c.bounds_lr;
  return ad::Adam(o);
}

/// Step-size multiplier for the update made at `step` (0-based).
inline double lr_scale(const ExperimentConfig &c, std::uint64_t step) {
  if (c.lr_schedule != "cosine" || c.steps <= 0) return 1.0;
  return 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(c.steps)));
}

// ---------------------------------------------------------------------------
// Checkpoints

inline Checkpoint make_checkpoint(const ExperimentConfig &c, const svgp::GpModel &model, const ad::Adam &adam) {
  Checkpoint ck;
  ck.step = adam.steps();
  ck.config_text = to_ini(c);
  for (const auto &p : model.params.all()) ck.tensors.push_back(Tensor::from_matrix(p.name, p.storage));
  for (const auto &[name, m] : adam.first_moments()) ck.tensors.push_back(Tensor::from_matrix("adam/m/" + name, m));
  for (const auto &[name, v] : adam.second_moments()) ck.tensors.push_back(Tensor::from_matrix("adam/v/" + name, v));
  return ck;
}

/// Copies parameters and optimiser state out of a checkpoint; every model
/// parameter must be present with its exact shape.
inline void restore_state(const Checkpoint &ck, svgp::GpModel &model, ad::Adam &adam) {
  for (auto &p : model.params.all()) {
    const Matrix m = ck.at(p.name).matrix();
    if (m.rows() != p.storage.rows() || m.cols() != p.storage.cols()) {
      fail(ErrorCode::BadCheckpoint, "tensor '" + p.name + "' has the wrong shape for this config");
    }
    p.storage = m;
  }
  std::map<std::string, Matrix> first, second;
  for (const auto &t : ck.tensors) {
    if (t.name.starts_with("adam/m/")) first[t.name.substr(7)] = t.matrix();
    if (t.name.starts_with("adam/v/")) second[t.name.substr(7)] = t.matrix();
  }
  adam.restore(ck.step, std::move(first), std::move(second));
}

/// Model, optimiser and config rebuilt from a checkpoint alone.
struct Restored {
  ExperimentConfig config;
  svgp::GpModel model;
  ad::Adam adam;
};

inline Restored restore(const Checkpoint &ck) {
  Restored r{parse_ini(ck.config_text), {}, ad::Adam()};
  // Placeholder inputs: every parameter is overwritten below.
  r.model = build_model(r.config, Matrix::Zero(r.config.M, task_dim(r.config)));
  r.adam = make_adam(r.config);
  restore_state(ck, r.model, r.adam);
  return r;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalResult {
  double error_pct = kMissing;
  double nlpd = kMissing;
  double rmse = kMissing;
  double train_elbo = kMissing;
};

/// ELBO on the whole of (X, Y), accumulated in chunks with one KL term.
inline svgp::ElboTerms full_elbo(const svgp::GpModel &model, const Matrix &X, const Matrix &Y, const RngStream &stream,
                                 Eigen::Index chunk = 500) {
  ad::Tape tape(false);
  const svgp::PriorVars prior = svgp::bind_prior(tape, model);
  const bool gaussian = model.config.likelihood == svgp::Likelihood::gaussian;
  const ad::Var noise = gaussian ? tape.bind(model.params, svgp::names::noise) : ad::Var();
  svgp::ElboTerms out;
  for (Eigen::Index start = 0; start < X.rows(); start += chunk) {
    const Eigen::Index n = std::min(chunk, X.rows() - start);
    const std::size_t mark = tape.size();
    const Matrix Xc = X.middleRows(start, n);
    const svgp::MomentVars mv = svgp::moments(tape, model, prior, Xc, model.sampler(), model.config.kernel.S,
                                              stream.child(std::to_string(start)));
    if (gaussian) {
      out.data_fit += svgp::gaussian_expected_loglik(mv, Y.middleRows(start, n), noise).scalar();
    } else {
      const Vector y = Y.middleRows(start, n).col(0);
      const ad::Var c = pgclassify::recog_forward(tape, model.params, Xc, y);
      out.data_fit += pgclassify::expected_loglik_pg(mv.mean, mv.mean_sq, mv.var, y, c).scalar();
    }
    tape.rewind(mark);
  }
  out.kl = svgp::kl_qu(tape, model, prior).scalar();
  out.elbo = out.data_fit - out.kl;
  return out;
}

/// Test error (classification tasks), mean NLPD and RMSE (toy task) on the
/// first `test_points` test inputs (0 = all), plus the train-set ELBO.
inline EvalResult evaluate(const ExperimentConfig &c, const svgp::GpModel &model, const TaskData &data,
                           Eigen::Index test_points = 0, bool with_train_elbo = true) {
  const Eigen::Index n = test_points > 0 ? std::min(test_points, data.test.X.rows()) : data.test.X.rows();
  const Eigen::Index n_nlpd = c.nlpd_points > 0 ? std::min<Eigen::Index>(c.nlpd_points, n) : n;
  if (data.test.X.cols() != task_dim(c) || data.Y_test.rows() != data.test.X.rows()) {
    fail(ErrorCode::ShapeMismatch, "test data do not match the task");
  }
  const Matrix Xs = data.test.X.topRows(n);
  const Matrix Ys = data.Y_test.topRows(n);
  const RngStream stream(c.seed, {"predict"});
  EvalResult r;
  if (is_binary(c)) {
    const Vector p = pgclassify::predict_proba(model, Xs, c.S_pred, stream);
    double wrong = 0.0, nlpd = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool positive = Ys(i, 0) > 0.0;
      if ((p[i] > 0.5) != positive) wrong += 1.0;
      if (i < n_nlpd) nlpd -= std::log(std::max(positive ? p[i] : 1.0 - p[i], 1e-300));
    }
    r.error_pct = 100.0 * wrong / static_cast<double>(n);
    r.nlpd = nlpd / static_cast<double>(n_nlpd);
  } else {
    auto gaussian_nlpd = [](const svgp::Prediction &pred, const Matrix &Y) {
      const Matrix v = pred.var;
      const Matrix r2 = (Y - pred.mean).array().square();
      const double total =
          (0.5 * (2.0 * std::numbers::pi * v.array()).log() + 0.5 * r2.array() / v.array()).sum();
      return total / static_cast<double>(Y.rows());
    };
    if (is_toy(c)) {
      const svgp::Prediction pred = svgp::predict(model, Xs, c.S_pred, stream);
      r.rmse = std::sqrt((pred.mean - Ys).squaredNorm() / static_cast<double>(n));
      r.nlpd = gaussian_nlpd(svgp::Prediction{pred.mean.topRows(n_nlpd), pred.var.topRows(n_nlpd)},
                             Ys.topRows(n_nlpd));
    } else {
      const svgp::Prediction mean = svgp::predict(model, Xs, c.S_pred, stream, true, 256, false);
      double wrong = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index guess = 0, truth = 0;
        mean.mean.row(i).maxCoeff(&guess);
        Ys.row(i).maxCoeff(&truth);
        if (guess != truth) wrong += 1.0;
      }
      r.error_pct = 100.0 * wrong / static_cast<double>(n);
      r.rmse = std::sqrt((mean.mean - Ys).squaredNorm() / static_cast<double>(n));
      // Same stream, so the first n_nlpd means agree with the ones above.
      const svgp::Prediction pred = svgp::predict(model, Xs.topRows(n_nlpd), c.S_pred, stream);
      r.nlpd = gaussian_nlpd(pred, Ys.topRows(n_nlpd));
    }
  }
  if (with_train_elbo) r.train_elbo = full_elbo(model, data.train.X, data.Y_train, RngStream(c.seed, {"train_elbo"})).elbo;
  return r;
}

/// Learned range summaries: rotation half-width in degrees, and the mean
/// half-width of the (first) affine box.
inline void bound_summaries(const svgp::GpModel &model, MetricsRow &row) {
  const augment::AugmentationSampler *affine = nullptr;
  const auto &s = model.sampler();
  if (s.kind == augment::SamplerKind::affine) affine = &s;
  for (const auto &part : s.parts)
    if (affine == nullptr && part.kind == augment::SamplerKind::affine) affine = &part;
  if (affine == nullptr) return;
  const augment::AffineBounds b = augment::affine_bounds(model.params, *affine);
  row.halfwidth_mean = b.halfwidth().mean();
  if (affine->affine_mode == augment::AffineMode::rotation_only) row.alpha_deg = b.halfwidth()[0] * 180.0 / std::numbers::pi;
}

// ---------------------------------------------------------------------------
// Training

struct TrainResult {
  std::string checkpoint;
  MetricsRow last;
  svgp::GpModel model;
};

/// One optimiser step on minibatch `step`; returns the ELBO estimate used.
inline svgp::ElboTerms train_step(const ExperimentConfig &c, svgp::GpModel &model, ad::Adam &adam, const TaskData &data,
                                  std::uint64_t step) {
  const Eigen::Index N = data.train.X.rows();
  const Eigen::Index Nb = std::min<Eigen::Index>(c.batch_size, N);
  std::vector<Eigen::Index> rows;
  if (Nb == N) {
    for (Eigen::Index i = 0; i < N; ++i) rows.push_back(i);
  } else {
    RngStream batch(c.seed, {"batch", std::to_string(step)});
    rows = sample_without_replacement(batch, N, Nb);
  }
  Matrix Xb(Nb, data.train.X.cols()), Yb(Nb, data.Y_train.cols());
  for (Eigen::Index i = 0; i < Nb; ++i) {
    Xb.row(i) = data.train.X.row(rows[static_cast<std::size_t>(i)]);
    Yb.row(i) = data.Y_train.row(rows[static_cast<std::size_t>(i)]);
  }
  const RngStream augment_stream(c.seed, {"augment", std::to_string(step)});
  try {
    ad::Tape tape;
    const svgp::ElboVars e = is_binary(c) ? pgclassify::elbo_logistic(tape, model, Xb, Yb.col(0), N, augment_stream)
                                          : svgp::elbo_gaussian(tape, model, Xb, Yb, N, augment_stream);
    const svgp::ElboTerms terms = svgp::values(e);
    if (!std::isfinite(terms.elbo)) fail(ErrorCode::NonFiniteObjective, "ELBO is " + std::to_string(terms.elbo));
    adam.step(model.params, tape.backward(ad::neg(e.elbo)), lr_scale(c, step));
    return terms;
  } catch (const Error &err) {
    std::string ids;
    for (std::size_t i = 0; i < std::min<std::size_t>(rows.size(), 5); ++i) ids += (i ? " " : "") + std::to_string(rows[i]);
    if (rows.size() > 5) ids += " ...";
    fail(err.code(), "step " + std::to_string(step) + ", batch rows [" + ids + "]: " + err.what());
  }
}

/// Runs Adam up to config.steps, writing metrics.csv, timing.csv and
/// checkpoints under config.output_dir. With `resume`, continues from that
/// checkpoint; the result is identical to an uninterrupted run.
inline TrainResult train(const ExperimentConfig &c, const TaskData &data, const std::string &resume = "",
                         std::ostream *log = nullptr) {
  validate(c);
  std::filesystem::create_directories(c.output_dir);
  const std::filesystem::path dir(c.output_dir);
  svgp::GpModel model = build_model(c, data.train.X);
  ad::Adam adam = make_adam(c);
  std::int64_t keep = -1;
  if (!resume.empty()) {
    restore_state(load_checkpoint(resume), model, adam);
    keep = static_cast<std::int64_t>(adam.steps());
  }
  CsvLog metrics((dir / "metrics.csv").string(), metrics_header(), keep);
  CsvLog timing((dir / "timing.csv").string(), "step,wall_seconds", keep);
  const auto t0 = std::chrono::steady_clock::now();
  const auto steps = static_cast<std::uint64_t>(c.steps);

  MetricsRow row;
  auto record = [&](std::uint64_t step, const svgp::ElboTerms *terms) {
    row = MetricsRow{};
    row.step = step;
    if (terms != nullptr) {
      row.elbo = terms->elbo;
      row.data_fit = terms->data_fit;
      row.kl = terms->kl;
    }
    const EvalResult ev = evaluate(c, model, data, step == steps ? 0 : c.eval_points);
    row.train_elbo = ev.train_elbo;
    row.test_error_pct = ev.error_pct;
    row.test_nlpd = ev.nlpd;
    row.test_rmse = ev.rmse;
    bound_summaries(model, row);
    metrics.append(format_row(row));
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    timing.append(std::to_string(step) + "," + detail::format_double(wall));
    if (log != nullptr) *log << format_row(row) << "\n" << std::flush;
  };

  if (adam.steps() == 0) record(0, nullptr);
  while (adam.steps() < steps) {
    const svgp::ElboTerms terms = train_step(c, model, adam, data, adam.steps());
    const std::uint64_t done = adam.steps();
    if (done % static_cast<std::uint64_t>(c.eval_every) == 0 || done == steps) record(done, &terms);
    if (c.checkpoint_every > 0 && done % static_cast<std::uint64_t>(c.checkpoint_every) == 0) {
      save_checkpoint((dir / ("ckpt_" + std::to_string(done) + ".igp")).string(), make_checkpoint(c, model, adam));
    }
  }
  const std::string final_path = (dir / "final.igp").string();
  save_checkpoint(final_path, make_checkpoint(c, model, adam));
  return {final_path, row, std::move(model)};
}

// ---------------------------------------------------------------------------
// Augmentation dumps

/// For each of the first k test images, writes aug_<i>.pgm: the source with a
/// white frame followed by S samples from the learned p(x_a | x). Drawn affine
/// parameters go to angles.csv (image, sample, angle_deg for rotation models;
/// image, sample, p0..p5 for full affine models).
inline std::vector<std::string> dump_augmented(const ExperimentConfig &c, const svgp::GpModel &model,
                                               const Dataset &images, Eigen::Index k, Eigen::Index S,
                                               const std::string &out_dir) {
  const auto shape = task_shape(c);
  if (!shape.valid()) fail(ErrorCode::UnsupportedShape, "dump_augmented needs an image task");
  if (S < 0 || k < 0) fail(ErrorCode::BadConfig, "dump_augmented: k and S must be non-negative");
  std::filesystem::create_directories(out_dir);
  const auto &sampler = model.sampler();
  const bool has_affine = sampler.kind == augment::SamplerKind::affine ||
                          (sampler.kind == augment::SamplerKind::composite && !sampler.parts.empty() &&
                           sampler.parts.front().kind == augment::SamplerKind::affine);
  const bool rotation = sampler.kind == augment::SamplerKind::affine &&
                        sampler.affine_mode == augment::AffineMode::rotation_only;
  std::ofstream angles(std::filesystem::path(out_dir) / "angles.csv");
  angles << (rotation ? "image,sample,angle_deg" : has_affine ? "image,sample,p0,p1,p2,p3,p4,p5" : "image,sample") << "\n";

  const Eigen::Index H = shape.height + 2, W = shape.width + 2;
  std::vector<std::string> files;
  for (Eigen::Index i = 0; i < std::min(k, images.size()); ++i) {
    Matrix samples(0, shape.pixels()), params;
    if (S > 0 && sampler.kind != augment::SamplerKind::finite_orbit) {
      ad::Tape tape(false);
      const auto batch = augment::augment_batch(tape, sampler, model.params, images.X.row(i), S,
                                                RngStream(c.seed, {"dump", std::to_string(i)}));
      samples = batch.samples.value();
      params = batch.affine_params;
    } else if (S > 0) {
      samples = Matrix(images.X.row(i)).replicate(S, 1);
    }
    augment::Image grid = augment::Image::zeros({H, W * (1 + S) + S});
    auto paste = [&](const RowVector &px, Eigen::Index x0) {
      for (Eigen::Index r = 0; r < shape.height; ++r)
        for (Eigen::Index q = 0; q < shape.width; ++q) grid.at(r + 1, x0 + q + 1) = px[r * shape.width + q];
    };
    for (Eigen::Index q = 0; q < W; ++q) grid.at(0, q) = grid.at(H - 1, q) = 1.0;
    for (Eigen::Index r = 0; r < H; ++r) grid.at(r, 0) = grid.at(r, W - 1) = 1.0;
    paste(images.X.row(i), 0);
    for (Eigen::Index s = 0; s < S; ++s) {
      paste(samples.row(s), (W + 1) * (s + 1));
      angles << i << "," << s;
      if (rotation) {
        angles << "," << detail::format_double(params(s, 0) * 180.0 / std::numbers::pi);
      } else if (has_affine) {
        for (Eigen::Index j = 0; j < params.cols(); ++j) angles << "," << detail::format_double(params(s, j));
      }
      angles << "\n";
    }
    const std::string path = (std::filesystem::path(out_dir) / ("aug_" + std::to_string(i) + ".pgm")).string();
    augment::write_pgm(path, grid);
    files.push_back(path);
  }
  return files;
}

} // namespace igp::harness
