#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "igp/error.hpp"

namespace igp::harness {

/// Every knob of an experiment. Defaults are the desk-scale MNIST settings.
struct ExperimentConfig {
  // [experiment]
  std::string task = "mnist10"; // toy_symmetric | binary_oddeven | mnist10 | mnist_rot
  std::string name = "run";
  std::string output_dir = "runs/run";
  std::uint64_t seed = 0;

  // [data]
  std::string data_root;        // empty: $IGP_DATA_ROOT
  std::int64_t n_train = 10000; // first n of the training split (0 = all)
  std::int64_t n_test = 10000;
  double alpha_true_deg = 0.0;  // rotation applied to both splits
  std::uint64_t data_seed = 0;

  // [model]
  std::int64_t M = 750;
  bool whiten = false;
  double kernel_variance = 1.0;
  double kernel_lengthscale = 10.0;
  double noise_variance = 0.1;
  double q_scale = 1e-3;
  std::int64_t recog_hidden = 128;

  // [augment]
  std::string sampler = "identity"; // identity | swap | rotation | affine | elastic | affine_elastic
  std::int64_t S = 2;
  std::int64_t S_pred = 50;
  double init_angle_deg = 5.0;   // rotation-only half-width
  double init_halfwidth = 0.05;  // full-affine half-width of each offset
  double elastic_amplitude = 0.01;
  double elastic_smoothness = 3.0;
  bool train_augmentation = true;

  // [train]
  std::int64_t steps = 1000;
  std::int64_t batch_size = 200;
  double lr = 1e-3;
  double bounds_lr = 1e-2;
  std::string lr_schedule = "constant"; // constant | cosine (decays both step sizes to zero at `steps`)
  std::int64_t eval_every = 500;
  std::int64_t checkpoint_every = 0; // 0: final checkpoint only
  std::int64_t eval_points = 0;      // test points used at cadence evals (0 = all); the last step uses all
  std::int64_t nlpd_points = 0;      // cap on points scored for NLPD (0 = no cap)
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string &key, const std::string &text) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    fail(ErrorCode::BadConfig, "'" + key + "' expects a number, got '" + text + "'");
  }
  return v;
}

template <typename Int>
Int parse_int(const std::string &key, const std::string &text) {
  Int v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    fail(ErrorCode::BadConfig, "'" + key + "' expects an integer, got '" + text + "'");
  }
  return v;
}

inline bool parse_bool(const std::string &key, const std::string &text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  fail(ErrorCode::BadConfig, "'" + key + "' expects true or false, got '" + text + "'");
}

/// One config field: section, key, printer and parser.
struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const ExperimentConfig &)> get;
  std::function<void(ExperimentConfig &, const std::string &)> set;
};

template <typename T>
Field field(std::string section, std::string key, T ExperimentConfig::*member) {
  const std::string full = section + "." + key;
  Field f{std::move(section), std::move(key), {}, {}};
  if constexpr (std::is_same_v<T, std::string>) {
    f.get = [member](const ExperimentConfig &c) { return c.*member; };
    f.set = [member](ExperimentConfig &c, const std::string &v) { c.*member = v; };
  } else if constexpr (std::is_same_v<T, bool>) {
    f.get = [member](const ExperimentConfig &c) { return std::string(c.*member ? "true" : "false"); };
    f.set = [member, full](ExperimentConfig &c, const std::string &v) { c.*member = parse_bool(full, v); };
  } else if constexpr (std::is_same_v<T, double>) {
    f.get = [member](const ExperimentConfig &c) { return format_double(c.*member); };
    f.set = [member, full](ExperimentConfig &c, const std::string &v) { c.*member = parse_double(full, v); };
  } else {
    f.get = [member](const ExperimentConfig &c) { return std::to_string(c.*member); };
    f.set = [member, full](ExperimentConfig &c, const std::string &v) { c.*member = parse_int<T>(full, v); };
  }
  return f;
}

inline const std::vector<Field> &fields() {
  using C = ExperimentConfig;
  static const std::vector<Field> all = {
      field("experiment", "task", &C::task),
      field("experiment", "name", &C::name),
      field("experiment", "output_dir", &C::output_dir),
      field("experiment", "seed", &C::seed),
      field("data", "root", &C::data_root),
      field("data", "n_train", &C::n_train),
      field("data", "n_test", &C::n_test),
      field("data", "alpha_true_deg", &C::alpha_true_deg),
      field("data", "seed", &C::data_seed),
      field("model", "M", &C::M),
      field("model", "whiten", &C::whiten),
      field("model", "kernel_variance", &C::kernel_variance),
      field("model", "kernel_lengthscale", &C::kernel_lengthscale),
      field("model", "noise_variance", &C::noise_variance),
      field("model", "q_scale", &C::q_scale),
      field("model", "recog_hidden", &C::recog_hidden),
      field("augment", "sampler", &C::sampler),
      field("augment", "S", &C::S),
      field("augment", "S_pred", &C::S_pred),
      field("augment", "init_angle_deg", &C::init_angle_deg),
      field("augment", "init_halfwidth", &C::init_halfwidth),
      field("augment", "elastic_amplitude", &C::elastic_amplitude),
      field("augment", "elastic_smoothness", &C::elastic_smoothness),
      field("augment", "train", &C::train_augmentation),
      field("train", "steps", &C::steps),
      field("train", "batch_size", &C::batch_size),
      field("train", "lr", &C::lr),
      field("train", "bounds_lr", &C::bounds_lr),
      field("train", "lr_schedule", &C::lr_schedule),
      field("train", "eval_every", &C::eval_every),
      field("train", "checkpoint_every", &C::checkpoint_every),
      field("train", "eval_points", &C::eval_points),
      field("train", "nlpd_points", &C::nlpd_points),
  };
  return all;
}

} // namespace detail

/// Shortest text that parses back to the same double.
inline std::string format_number(double v) { return detail::format_double(v); }

inline void validate(const ExperimentConfig &c) {
  static const std::set<std::string> tasks = {"toy_symmetric", "binary_oddeven", "mnist10", "mnist_rot"};
  static const std::set<std::string> samplers = {"identity", "swap", "rotation", "affine", "elastic", "affine_elastic"};
  if (!tasks.contains(c.task)) fail(ErrorCode::BadConfig, "unknown task '" + c.task + "'");
  if (!samplers.contains(c.sampler)) fail(ErrorCode::BadConfig, "unknown sampler '" + c.sampler + "'");
  if (c.lr_schedule != "constant" && c.lr_schedule != "cosine") {
    fail(ErrorCode::BadConfig, "unknown lr_schedule '" + c.lr_schedule + "'");
  }
  if (c.M < 1) fail(ErrorCode::BadConfig, "model.M must be positive");
  if (c.S < 1 || c.S_pred < 1) fail(ErrorCode::BadConfig, "augment.S and augment.S_pred must be positive");
  if (c.steps < 0 || c.batch_size < 1 || c.eval_every < 1 || c.checkpoint_every < 0) {
    fail(ErrorCode::BadConfig, "train: steps >= 0, batch_size >= 1, eval_every >= 1, checkpoint_every >= 0");
  }
  if (c.n_train < 0 || c.n_test < 0 || c.eval_points < 0 || c.nlpd_points < 0) fail(ErrorCode::BadConfig, "sizes must be non-negative");
  if (c.task == "toy_symmetric" && c.sampler != "identity" && c.sampler != "swap") {
    fail(ErrorCode::BadConfig, "toy_symmetric inputs are 2-d points: use sampler identity or swap");
  }
  if (c.task != "toy_symmetric" && c.sampler == "swap") {
    fail(ErrorCode::BadConfig, "the swap orbit needs 2-d inputs (task toy_symmetric)");
  }
}

/// Canonical text: every field, fixed order, shortest round-trip numbers.
inline std::string to_ini(const ExperimentConfig &c) {
  std::ostringstream os;
  std::string section;
  for (const auto &f : detail::fields()) {
    if (f.section != section) {
      if (!section.empty()) os << "\n";
      section = f.section;
      os << "[" << section << "]\n";
    }
    os << f.key << " = " << f.get(c) << "\n";
  }
  return os.str();
}

/// Missing keys keep their defaults; unknown sections or keys are errors.
inline ExperimentConfig parse_ini(const std::string &text) {
  boost::property_tree::ptree tree;
  std::istringstream is(text);
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error &e) {
    fail(ErrorCode::BadConfig, std::string("config syntax: ") + e.what());
  }
  ExperimentConfig c;
  const auto &all = detail::fields();
  for (const auto &[section, body] : tree) {
    if (body.empty() && !body.data().empty()) fail(ErrorCode::BadConfig, "key '" + section + "' outside a section");
    for (const auto &[key, value] : body) {
      auto it = std::find_if(all.begin(), all.end(), [&](const detail::Field &f) {
        return f.section == section && f.key == key;
      });
      if (it == all.end()) fail(ErrorCode::BadConfig, "unknown config key '" + section + "." + key + "'");
      it->set(c, value.data());
    }
  }
  validate(c);
  return c;
}

inline ExperimentConfig load_config(const std::string &path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_ini(ss.str());
}

} // namespace igp::harness
