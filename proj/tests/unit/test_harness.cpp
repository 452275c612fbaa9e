#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>
#include <zlib.h>

#include "igp/harness/trainer.hpp"

using namespace igp;
using namespace igp::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string &name) {
  const fs::path dir = fs::temp_directory_path() / ("igp_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path &p, const std::string &bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string be32(std::uint32_t v) {
  return {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8), static_cast<char>(v)};
}

// Two 2x3 images with known bytes, labels 7 and 2.
const unsigned char kPixels[12] = {0, 51, 102, 153, 204, 255, 255, 0, 1, 2, 254, 128};

std::string image_file(std::uint32_t magic = 0x803, std::uint32_t count = 2, std::size_t pixel_bytes = 12) {
  std::string s = be32(magic) + be32(count) + be32(2) + be32(3);
  s.append(reinterpret_cast<const char *>(kPixels), pixel_bytes);
  return s;
}

std::string label_file(std::uint32_t magic = 0x801, std::uint32_t count = 2) {
  return be32(magic) + be32(count) + std::string("\x07\x02", count < 2 ? count : 2);
}

double ks_uniform(std::vector<double> v, double lo, double hi) {
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double F = (v[i] - lo) / (hi - lo);
    d = std::max({d, F - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - F});
  }
  return d;
}

Dataset random_images(Eigen::Index n, augment::ImageShape shape, std::uint64_t seed) {
  RngStream rng(seed, {"images"});
  Dataset ds;
  ds.shape = shape;
  ds.X = draw_matrix(rng, DrawKind::uniform01, n, shape.pixels());
  for (Eigen::Index i = 0; i < n; ++i) ds.labels.push_back(static_cast<int>(i % 10));
  return ds;
}

ExperimentConfig toy_config(const fs::path &dir) {
  ExperimentConfig c;
  c.task = "toy_symmetric";
  c.sampler = "swap";
  c.output_dir = dir.string();
  c.n_train = 50;
  c.n_test = 40;
  c.M = 10;
  c.kernel_lengthscale = 1.0;
  c.batch_size = 20;
  c.lr = 1e-2;
  c.steps = 20;
  c.eval_every = 5;
  return c;
}

} // namespace

// --- IDX ------------------------------------------------------------------

TEST(Idx, HandBuiltFixtureRoundTrips) {
  const fs::path dir = scratch("idx");
  spit(dir / "img", image_file());
  spit(dir / "lab", label_file());
  const Dataset ds = load_idx((dir / "img").string(), (dir / "lab").string());
  ASSERT_EQ(ds.X.rows(), 2);
  ASSERT_EQ(ds.X.cols(), 6);
  EXPECT_EQ(ds.shape, (augment::ImageShape{2, 3}));
  for (int k = 0; k < 12; ++k) EXPECT_EQ(ds.X(k / 6, k % 6), kPixels[k] / 255.0);
  EXPECT_EQ(ds.labels, (std::vector<int>{7, 2}));

  write_idx(ds, (dir / "img2").string(), (dir / "lab2").string());
  EXPECT_EQ(slurp(dir / "img2"), slurp(dir / "img"));
  EXPECT_EQ(slurp(dir / "lab2"), slurp(dir / "lab"));
}

TEST(Idx, GzipIsTransparent) {
  const fs::path dir = scratch("idx_gz");
  const std::string bytes = image_file();
  gzFile f = gzopen((dir / "img.gz").string().c_str(), "wb");
  gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
  gzclose(f);
  spit(dir / "lab", label_file());
  const Dataset ds = load_idx((dir / "img.gz").string(), (dir / "lab").string());
  EXPECT_EQ(ds.X(1, 4), 254 / 255.0);
}

TEST(Idx, ErrorPaths) {
  const fs::path dir = scratch("idx_err");
  auto code_of = [&](const std::string &img, const std::string &lab) {
    spit(dir / "i", img);
    spit(dir / "l", lab);
    try {
      load_idx((dir / "i").string(), (dir / "l").string());
    } catch (const Error &e) {
      return e.code();
    }
    return ErrorCode::IoError;
  };
  EXPECT_EQ(code_of(image_file(0x801), label_file()), ErrorCode::BadMagic);
  EXPECT_EQ(code_of(image_file(), label_file(0x803)), ErrorCode::BadMagic);
  EXPECT_EQ(code_of(image_file(0x803, 2, 11), label_file()), ErrorCode::TruncatedFile);
  EXPECT_EQ(code_of(image_file().substr(0, 10), label_file()), ErrorCode::TruncatedFile);
  EXPECT_EQ(code_of(image_file(), label_file(0x801, 3)), ErrorCode::TruncatedFile);
  EXPECT_EQ(code_of(image_file(0x803, 1, 6), label_file()), ErrorCode::CountMismatch);
  EXPECT_THROW(load_idx((dir / "missing").string(), (dir / "l").string()), Error);
}

TEST(Idx, StandardMnistWhenAvailable) {
  const char *root = std::getenv("IGP_DATA_ROOT");
  if (root == nullptr || !fs::exists(fs::path(root) / "train-labels-idx1-ubyte")) GTEST_SKIP() << "no MNIST";
  const Dataset ds = load_mnist(root, "train");
  EXPECT_EQ(ds.X.rows(), 60000);
  EXPECT_EQ(ds.X.cols(), 784);
  EXPECT_GE(ds.X.minCoeff(), 0.0);
  EXPECT_LE(ds.X.maxCoeff(), 1.0);
}

// --- rotation ---------------------------------------------------------------

TEST(Rotate, ZeroAngleIsIdentity) {
  const Dataset ds = random_images(20, {8, 8}, 1);
  const RotatedDataset r = make_rotated(ds, 0.0, 3);
  EXPECT_EQ(r.data.X, ds.X);
  EXPECT_EQ(r.data.labels, ds.labels);
}

TEST(Rotate, DeterministicInTheSeed) {
  const Dataset ds = random_images(20, {8, 8}, 1);
  EXPECT_EQ(make_rotated(ds, 45.0, 3).data.X, make_rotated(ds, 45.0, 3).data.X);
  EXPECT_NE(make_rotated(ds, 45.0, 3).data.X, make_rotated(ds, 45.0, 4).data.X);
  EXPECT_NE(make_rotated(ds, 45.0, 3).data.provenance.find("seed=3"), std::string::npos);
}

TEST(Rotate, AnglesAreUniform) {
  const Dataset ds = random_images(10000, {4, 4}, 2);
  const RotatedDataset r = make_rotated(ds, 180.0, 11);
  ASSERT_EQ(r.angles_deg.size(), 10000u);
  EXPECT_LT(ks_uniform(r.angles_deg, -180.0, 180.0), 0.02);
}

TEST(Rotate, HalfTurnOfASymmetricGridMatchesIndexReversal) {
  Dataset ds = random_images(1, {5, 5}, 4);
  // An angle of exactly 180 degrees is never drawn; check the warp used for
  // the dataset against the pixel reversal a half turn must produce.
  const augment::Image img(ds.shape, ds.X.row(0).transpose());
  const augment::Image turned = augment::warp(img, augment::rotation_matrix(std::numbers::pi));
  for (Eigen::Index k = 0; k < 25; ++k) EXPECT_NEAR(turned.pixels[k], img.pixels[24 - k], 1e-12);
}

// --- config -------------------------------------------------------------------

TEST(Config, DefaultsAreTheDeskScaleSettings) {
  const ExperimentConfig c;
  EXPECT_EQ(c.M, 750);
  EXPECT_EQ(c.batch_size, 200);
  EXPECT_EQ(c.S, 2);
  EXPECT_EQ(c.S_pred, 50);
  EXPECT_EQ(c.lr, 1e-3);
  EXPECT_EQ(c.bounds_lr, 1e-2);
}

TEST(Config, RoundTripIsIdentity) {
  ExperimentConfig c = toy_config("/tmp/x y");
  c.lr = 0.1;
  c.init_halfwidth = 1.0 / 3.0;
  c.whiten = true;
  c.seed = 18446744073709551615ull;
  const std::string text = to_ini(c);
  EXPECT_EQ(to_ini(parse_ini(text)), text);
  EXPECT_EQ(parse_ini(text).init_halfwidth, 1.0 / 3.0);
  EXPECT_EQ(to_ini(parse_ini(to_ini(ExperimentConfig{}))), to_ini(ExperimentConfig{}));
}

TEST(Config, PartialFilesKeepDefaults) {
  const ExperimentConfig c = parse_ini("[model]\nM = 20\n\n[augment]\nsampler = rotation\n");
  EXPECT_EQ(c.M, 20);
  EXPECT_EQ(c.sampler, "rotation");
  EXPECT_EQ(c.S_pred, 50);
}

TEST(Config, RejectsBadInput) {
  auto code_of = [](const std::string &text) {
    try {
      parse_ini(text);
    } catch (const Error &e) {
      return e.code();
    }
    return ErrorCode::IoError;
  };
  EXPECT_EQ(code_of("[model]\nMM = 3\n"), ErrorCode::BadConfig);
  EXPECT_EQ(code_of("[model]\nM = three\n"), ErrorCode::BadConfig);
  EXPECT_EQ(code_of("[train]\nlr = 1e-3x\n"), ErrorCode::BadConfig);
  EXPECT_EQ(code_of("[experiment]\ntask = cifar\n"), ErrorCode::BadConfig);
  EXPECT_EQ(code_of("[augment]\nsampler = swap\n"), ErrorCode::BadConfig);
  EXPECT_EQ(code_of("[model\nM = 3\n"), ErrorCode::BadConfig);
  EXPECT_EQ(code_of("[train]\nlr_schedule = step\n"), ErrorCode::BadConfig);
}

TEST(Config, CosineScheduleDecaysToZero) {
  ExperimentConfig c;
  c.steps = 100;
  EXPECT_EQ(lr_scale(c, 0), 1.0);
  EXPECT_EQ(lr_scale(c, 99), 1.0);
  c.lr_schedule = "cosine";
  EXPECT_EQ(lr_scale(c, 0), 1.0);
  EXPECT_NEAR(lr_scale(c, 50), 0.5, 1e-15);
  EXPECT_LT(lr_scale(c, 99), 1e-3);
  EXPECT_GT(lr_scale(c, 99), 0.0);
}

TEST(Config, ShippedConfigsLoad) {
  int count = 0;
  for (const auto &entry : std::filesystem::directory_iterator(IGP_CONFIG_DIR)) {
    if (entry.path().extension() != ".ini") continue;
    const ExperimentConfig c = load_config(entry.path().string());
    EXPECT_EQ(parse_ini(to_ini(c)).output_dir, c.output_dir) << entry.path();
    ++count;
  }
  EXPECT_GE(count, 6);
  EXPECT_EQ(load_config(std::string(IGP_CONFIG_DIR) + "/mnist10_affine.ini").M, 750);
}

// --- checkpoint ---------------------------------------------------------------

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  const fs::path dir = scratch("ckpt");
  Checkpoint ck;
  ck.step = 42;
  ck.config_text = to_ini(ExperimentConfig{});
  ck.tensors.push_back(Tensor::from_matrix("a/b", Matrix::Random(3, 4)));
  ck.tensors.push_back(Tensor{"scalar", {}, {-0.0}});
  ck.tensors.push_back(Tensor{"cube", {2, 1, 2}, {1.0, std::numeric_limits<double>::denorm_min(), 1e300, -3.5}});
  save_checkpoint((dir / "a.igp").string(), ck);
  const Checkpoint back = load_checkpoint((dir / "a.igp").string());
  save_checkpoint((dir / "b.igp").string(), back);
  EXPECT_EQ(slurp(dir / "a.igp"), slurp(dir / "b.igp"));
  EXPECT_EQ(back.step, 42u);
  EXPECT_EQ(back.at("a/b").matrix(), ck.tensors[0].matrix());
  EXPECT_TRUE(std::signbit(back.at("scalar").values[0]));
}

TEST(Checkpoint, HeaderLayout) {
  Checkpoint ck;
  ck.step = 7;
  ck.tensors.push_back(Tensor::from_matrix("w", Matrix::Constant(1, 1, 1.0)));
  const std::string bytes = serialize(ck);
  // magic, version, step, config length, count, name length, name, rank, 2 dims, 1 value
  EXPECT_EQ(bytes.size(), 4u + 4 + 8 + 8 + 8 + 4 + 1 + 4 + 16 + 8);
  EXPECT_EQ(bytes.substr(0, 4), "IGP1");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[8], 7);
  EXPECT_EQ(bytes.substr(bytes.size() - 8), std::string("\0\0\0\0\0\0\xf0\x3f", 8));
}

TEST(Checkpoint, RejectsDamage) {
  Checkpoint ck;
  ck.tensors.push_back(Tensor::from_matrix("w", Matrix::Ones(2, 2)));
  const std::string bytes = serialize(ck);
  auto code_of = [](const std::string &b) {
    try {
      deserialize(b);
    } catch (const Error &e) {
      return e.code();
    }
    return ErrorCode::IoError;
  };
  EXPECT_EQ(code_of("IGP2" + bytes.substr(4)), ErrorCode::BadMagic);
  EXPECT_EQ(code_of(bytes.substr(0, bytes.size() - 3)), ErrorCode::TruncatedFile);
  EXPECT_EQ(code_of(bytes + "x"), ErrorCode::BadCheckpoint);
  std::string v2 = bytes;
  v2[4] = 2;
  EXPECT_EQ(code_of(v2), ErrorCode::BadCheckpoint);
}

// --- training -------------------------------------------------------------------

TEST(Train, ZeroStepsSavesTheInitialisation) {
  const fs::path dir = scratch("zero");
  ExperimentConfig c = toy_config(dir);
  c.steps = 0;
  const TaskData data = load_task(c);
  const TrainResult res = train(c, data);
  const Restored back = restore(load_checkpoint(res.checkpoint));
  const svgp::GpModel init = build_model(c, data.train.X);
  ASSERT_EQ(back.model.params.size(), init.params.size());
  for (const auto &p : init.params.all()) EXPECT_EQ(back.model.params.at(p.name).storage, p.storage) << p.name;
  EXPECT_EQ(back.adam.steps(), 0u);
  EXPECT_EQ(to_ini(back.config), to_ini(c));
}

TEST(Train, RunsAreReproducible) {
  const fs::path a = scratch("rep_a"), b = scratch("rep_b");
  train(toy_config(a), load_task(toy_config(a)));
  train(toy_config(b), load_task(toy_config(b)));
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
  const std::string m = slurp(a / "metrics.csv");
  EXPECT_EQ(m.substr(0, m.find('\n')), metrics_header());
  EXPECT_EQ(std::count(m.begin(), m.end(), '\n'), 6); // header + steps 0, 5, 10, 15, 20
}

TEST(Train, ResumeContinuesBitwise) {
  const fs::path full = scratch("resume_full"), part = scratch("resume_part");
  ExperimentConfig cf = toy_config(full);
  const TaskData data = load_task(cf);
  const TrainResult uninterrupted = train(cf, data);

  ExperimentConfig cp = toy_config(part);
  cp.steps = 10;
  cp.checkpoint_every = 10;
  train(cp, data);
  cp.steps = 20;
  const TrainResult resumed = train(cp, data, (part / "ckpt_10.igp").string());
  EXPECT_EQ(slurp(full / "metrics.csv"), slurp(part / "metrics.csv"));
  const Checkpoint x = load_checkpoint(uninterrupted.checkpoint), y = load_checkpoint(resumed.checkpoint);
  ASSERT_EQ(x.tensors.size(), y.tensors.size());
  for (std::size_t i = 0; i < x.tensors.size(); ++i) {
    EXPECT_EQ(x.tensors[i].name, y.tensors[i].name);
    EXPECT_EQ(x.tensors[i].values, y.tensors[i].values) << x.tensors[i].name;
  }
}

TEST(Train, ResumeUnderCosineScheduleReplaysTheRun) {
  const fs::path full = scratch("cosine_full"), part = scratch("cosine_part");
  ExperimentConfig c = toy_config(full);
  c.lr_schedule = "cosine";
  c.checkpoint_every = 10;
  const TaskData data = load_task(c);
  const TrainResult uninterrupted = train(c, data);
  c.output_dir = part.string();
  const TrainResult resumed = train(c, data, (full / "ckpt_10.igp").string());
  const Checkpoint x = load_checkpoint(uninterrupted.checkpoint), y = load_checkpoint(resumed.checkpoint);
  for (std::size_t i = 0; i < x.tensors.size(); ++i) EXPECT_EQ(x.tensors[i].values, y.tensors[i].values);
  ExperimentConfig constant = toy_config(scratch("cosine_const"));
  EXPECT_NE(train(constant, data).last.elbo, uninterrupted.last.elbo);
}

TEST(Train, ImprovesTheToyElbo) {
  const fs::path dir = scratch("improve");
  ExperimentConfig c = toy_config(dir);
  c.steps = 300;
  c.eval_every = 300;
  const TaskData data = load_task(c);
  const svgp::GpModel init = build_model(c, data.train.X);
  const double before = full_elbo(init, data.train.X, data.Y_train, RngStream(0)).elbo;
  const TrainResult res = train(c, data);
  EXPECT_GT(res.last.train_elbo, before + 10.0);
  EXPECT_LT(res.last.test_rmse, 0.5);
}

// --- evaluation -------------------------------------------------------------------

namespace {

/// Binary task on synthetic 28x28 images: bright (+1) versus dark (-1).
TaskData bright_dark(Eigen::Index n, std::uint64_t seed) {
  RngStream rng(seed, {"bright"});
  TaskData d;
  d.train.shape = d.test.shape = {28, 28};
  d.train.X.resize(n, 784);
  d.Y_train.resize(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool pos = i % 2 == 0;
    d.Y_train(i, 0) = pos ? 1.0 : -1.0;
    for (Eigen::Index j = 0; j < 784; ++j) d.train.X(i, j) = (pos ? 0.9 : 0.1) + 0.05 * (rng.uniform() - 0.5);
  }
  d.test = d.train;
  d.Y_test = d.Y_train;
  return d;
}

ExperimentConfig binary_config() {
  ExperimentConfig c;
  c.task = "binary_oddeven";
  c.sampler = "identity";
  c.M = 10;
  c.kernel_lengthscale = 5.0;
  c.recog_hidden = 4;
  return c;
}

} // namespace

TEST(Evaluate, ConstantModelOnBalancedBinaryIsHalfWrong) {
  const ExperimentConfig c = binary_config();
  const TaskData d = bright_dark(40, 1);
  const svgp::GpModel model = build_model(c, d.train.X);
  const EvalResult r = evaluate(c, model, d);
  EXPECT_DOUBLE_EQ(r.error_pct, 50.0);
  EXPECT_NEAR(r.nlpd, std::numbers::ln2, 1e-12);
  EXPECT_TRUE(std::isfinite(r.train_elbo));
}

TEST(Evaluate, SeparatedToyIsPerfect) {
  const ExperimentConfig c = binary_config();
  const TaskData d = bright_dark(40, 2);
  svgp::GpModel model = build_model(c, d.train.X);
  // q mean = K_uu alpha with alpha the class sign of each inducing input.
  const Matrix Z = model.Z();
  Vector alpha(Z.rows());
  for (Eigen::Index j = 0; j < Z.rows(); ++j) alpha[j] = Z(j, 0) > 0.5 ? 1.0 : -1.0;
  model.params.set_value(svgp::names::q_mean, kernels::rbf_gram(Z, Z, model.base()) * alpha);
  const EvalResult r = evaluate(c, model, d, 0, false);
  EXPECT_DOUBLE_EQ(r.error_pct, 0.0);
  EXPECT_TRUE(std::isnan(r.train_elbo));
}

TEST(Evaluate, RejectsMismatchedData) {
  const ExperimentConfig c = binary_config();
  TaskData d = bright_dark(20, 3);
  const svgp::GpModel model = build_model(c, d.train.X);
  d.test.X = Matrix::Zero(20, 10);
  EXPECT_THROW(evaluate(c, model, d), Error);
}

// --- augmentation dumps -------------------------------------------------------------

namespace {

ExperimentConfig rotation_config(double angle_deg) {
  ExperimentConfig c;
  c.task = "mnist10";
  c.sampler = "rotation";
  c.init_angle_deg = angle_deg;
  c.M = 5;
  return c;
}

} // namespace

TEST(DumpAugmented, ZeroSamplesGivesFramedSources) {
  const fs::path dir = scratch("dump0");
  const ExperimentConfig c = rotation_config(30.0);
  const Dataset ds = random_images(6, {28, 28}, 5);
  const svgp::GpModel model = build_model(c, ds.X);
  const auto files = dump_augmented(c, model, ds, 2, 0, dir.string());
  ASSERT_EQ(files.size(), 2u);
  const augment::Image grid = augment::read_pgm(files[1]);
  EXPECT_EQ(grid.shape, (augment::ImageShape{30, 30}));
  EXPECT_EQ(grid.at(0, 0), 1.0);
  EXPECT_EQ(grid.at(29, 17), 1.0);
  EXPECT_NEAR(grid.at(1, 1), ds.X(1, 0), 0.5 / 255.0);
  EXPECT_NEAR(grid.at(28, 28), ds.X(1, 783), 0.5 / 255.0);
  EXPECT_EQ(slurp(dir / "angles.csv"), "image,sample,angle_deg\n");
}

TEST(DumpAugmented, LoggedAnglesStayInTheLearnedRange) {
  const fs::path dir = scratch("dump_angles");
  const ExperimentConfig c = rotation_config(30.0);
  const Dataset ds = random_images(6, {28, 28}, 6);
  const svgp::GpModel model = build_model(c, ds.X);
  dump_augmented(c, model, ds, 2, 6, dir.string());
  std::ifstream in(dir / "angles.csv");
  std::string line;
  std::getline(in, line);
  int rows = 0;
  while (std::getline(in, line)) {
    const double angle = std::stod(line.substr(line.rfind(',') + 1));
    EXPECT_LE(std::abs(angle), 30.0 + 1e-9);
    ++rows;
  }
  EXPECT_EQ(rows, 12);
  EXPECT_EQ(augment::read_pgm((dir / "aug_0.pgm").string()).shape, (augment::ImageShape{30, 30 * 7 + 6}));
}

TEST(DumpAugmented, TinyBoundsGiveNearCopies) {
  const fs::path dir = scratch("dump_tiny");
  const ExperimentConfig c = rotation_config(1e-4);
  Dataset ds = random_images(1, {28, 28}, 7);
  const svgp::GpModel model = build_model(c, Matrix::Zero(5, 784));
  dump_augmented(c, model, ds, 1, 3, dir.string());
  const augment::Image grid = augment::read_pgm((dir / "aug_0.pgm").string());
  for (Eigen::Index s = 1; s <= 3; ++s) {
    for (Eigen::Index r = 1; r <= 28; ++r) {
      for (Eigen::Index q = 1; q <= 28; ++q) EXPECT_NEAR(grid.at(r, 31 * s + q), grid.at(r, q), 1.5 / 255.0);
    }
  }
}
