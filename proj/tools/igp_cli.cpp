// igp: command-line front end for training, evaluation and the demos.
// Errors are reported on stderr as one line
//   error code=<ErrorCode> message="<text>"
// with exit status 1 (2 for usage errors).

#include <filesystem>
#include <iomanip>
#include <iostream>

#include <CLI11.hpp>

#include "igp/harness/experiments.hpp"

using namespace igp;
using namespace igp::harness;

namespace {

std::string quoted(std::string s) {
  for (auto &ch : s)
    if (ch == '"' || ch == '\n') ch = '\'';
  return "\"" + s + "\"";
}

void print_eval(const std::string &split, const EvalResult &r) {
  std::cout << "split=" << split << " error_pct=" << format_number(r.error_pct)
            << " nlpd=" << format_number(r.nlpd) << " rmse=" << format_number(r.rmse)
            << " train_elbo=" << format_number(r.train_elbo) << "\n";
}

int cmd_train(const std::string &config_path, const std::string &resume) {
  const ExperimentConfig cfg = load_config(config_path);
  const TaskData data = load_task(cfg);
  std::cout << metrics_header() << "\n";
  const TrainResult res = train(cfg, data, resume, &std::cout);
  std::cout << "checkpoint=" << res.checkpoint << "\n";
  return 0;
}

int cmd_eval(const std::string &ckpt, const std::string &split) {
  const Restored r = restore(load_checkpoint(ckpt));
  TaskData data = load_task(r.config);
  if (split == "train") {
    data.test = data.train;
    data.Y_test = data.Y_train;
  } else if (split != "test") {
    fail(ErrorCode::BadConfig, "--data must be train or test");
  }
  print_eval(split, evaluate(r.config, r.model, data));
  return 0;
}

int cmd_rotate(double alpha, std::uint64_t seed, const std::string &in, const std::string &out) {
  std::filesystem::create_directories(out);
  std::ofstream log(std::filesystem::path(out) / "provenance.txt");
  for (const std::string split : {"train", "test"}) {
    const Dataset ds = load_mnist(in, split);
    const RotatedDataset r = make_rotated(ds, alpha, split == "train" ? seed : seed + 1);
    const std::string stem = split == "train" ? "train" : "t10k";
    write_idx(r.data, (std::filesystem::path(out) / (stem + "-images-idx3-ubyte")).string(),
              (std::filesystem::path(out) / (stem + "-labels-idx1-ubyte")).string());
    std::ofstream angles(std::filesystem::path(out) / (stem + "-angles.csv"));
    angles << "index,angle_deg\n";
    for (std::size_t i = 0; i < r.angles_deg.size(); ++i) angles << i << "," << format_number(r.angles_deg[i]) << "\n";
    log << split << ": " << r.data.provenance << "\n";
    std::cout << split << ": " << r.data.size() << " images rotated\n";
  }
  return 0;
}

int cmd_dump(const std::string &ckpt, Eigen::Index k, Eigen::Index S, std::string out) {
  const Restored r = restore(load_checkpoint(ckpt));
  const TaskData data = load_task(r.config);
  if (out.empty()) out = (std::filesystem::path(r.config.output_dir) / "augmented").string();
  const auto files = dump_augmented(r.config, r.model, data.test, k, S, out);
  for (const auto &f : files) std::cout << f << "\n";
  return 0;
}

int cmd_toy(std::uint64_t seed) {
  const ToyDemo d = toy_demo(seed);
  std::cout << std::setprecision(10);
  std::cout << "rbf:       lml=" << d.rbf.lml << " rmse_mirrored=" << d.rmse_rbf << " variance=" << d.rbf.base.variance
            << " lengthscale=" << d.rbf.base.lengthscale << " noise=" << d.rbf.noise << "\n";
  std::cout << "invariant: lml=" << d.invariant.lml << " rmse_mirrored=" << d.rmse_invariant
            << " variance=" << d.invariant.base.variance << " lengthscale=" << d.invariant.base.lengthscale
            << " noise=" << d.invariant.noise << "\n";
  std::cout << "chunked decomposition of the invariant lml:\n";
  for (std::size_t c = 0; c < d.chunk_terms.size(); ++c) {
    std::cout << "  chunk " << c << " size=" << d.chunk_sizes[c] << " log p(y_c | y_<c)=" << d.chunk_terms[c] << "\n";
  }
  std::cout << "  sum=" << d.chunk_sum << " direct=" << d.invariant_lml_direct << "\n";
  std::cout << "invariant lml > rbf lml: " << (d.invariant.lml > d.rbf.lml ? "yes" : "no") << "\n";
  return 0;
}

int cmd_estimators(int draws) {
  bool all = true;
  for (const auto &c : estimator_check(draws)) {
    std::cout << (c.pass ? "PASS " : "FAIL ") << c.quantity << " mode=" << c.mode << " S=" << c.S
              << " mean=" << format_number(c.mean) << " se=" << format_number(c.se)
              << " exact=" << format_number(c.exact) << "\n";
    all = all && c.pass;
  }
  if (!all) {
    std::cerr << "error code=EstimatorCheckFailed message=\"an estimator mean is more than 3 SE from its exact value\"\n";
    return 1;
  }
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Gaussian processes with learned invariances"};
  app.require_subcommand(1);

  std::string config, resume, ckpt, split = "test", in, out;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  Eigen::Index k = 8, S = 8;
  int draws = 20000;

  auto *train_cmd = app.add_subcommand("train", "train a model from a config file");
  train_cmd->add_option("--config", config, "INI config")->required();
  train_cmd->add_option("--resume", resume, "checkpoint to continue from");

  auto *eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--ckpt", ckpt)->required();
  eval_cmd->add_option("--data", split, "train or test")->check(CLI::IsMember({"train", "test"}));

  auto *rotate_cmd = app.add_subcommand("rotate-data", "write a randomly rotated copy of MNIST");
  rotate_cmd->add_option("--alpha", alpha, "maximum angle in degrees")->required();
  rotate_cmd->add_option("--seed", seed)->required();
  rotate_cmd->add_option("--in", in, "directory with MNIST IDX files")->required();
  rotate_cmd->add_option("--out", out)->required();

  auto *dump_cmd = app.add_subcommand("dump-aug", "write PGM grids of learned augmentations");
  dump_cmd->add_option("--ckpt", ckpt)->required();
  dump_cmd->add_option("-k", k, "number of test images");
  dump_cmd->add_option("-S", S, "samples per image");
  dump_cmd->add_option("--out", out, "output directory (default <output_dir>/augmented)");

  auto *toy_cmd = app.add_subcommand("toy-demo", "invariant versus RBF exact GP on a symmetric toy");
  toy_cmd->add_option("--seed", seed);

  auto *est_cmd = app.add_subcommand("estimator-check", "unbiasedness of the kernel and moment estimators");
  est_cmd->add_option("--draws", draws);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    if (code != 0) std::cerr << "error code=Usage message=" << quoted(e.what()) << "\n";
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train_cmd) return cmd_train(config, resume);
    if (*eval_cmd) return cmd_eval(ckpt, split);
    if (*rotate_cmd) return cmd_rotate(alpha, seed, in, out);
    if (*dump_cmd) return cmd_dump(ckpt, k, S, out);
    if (*toy_cmd) return cmd_toy(seed);
    if (*est_cmd) return cmd_estimators(draws);
  } catch (const Error &e) {
    std::cerr << "error code=" << to_string(e.code()) << " message=" << quoted(e.what()) << "\n";
    return 1;
  } catch (const std::exception &e) {
    std::cerr << "error code=Internal message=" << quoted(e.what()) << "\n";
    return 1;
  }
  return 0;
}
