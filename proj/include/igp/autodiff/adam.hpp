#pragma once

#include <cmath>
#include <map>
#include <string>

#include "igp/autodiff/parameter.hpp"

namespace igp::ad {

struct AdamOptions {
  double lr = 1e-3;
  /// Step size for parameters whose name starts with `bounds_prefix`.
  double bounds_lr = 1e-2;
  std::string bounds_prefix = "aug/";
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam on unconstrained storage. Minimises: pass gradients of the loss.
class Adam {
public:
  explicit Adam(AdamOptions opts = {}) : opts_(std::move(opts)) {}

  /// One update; `lr_scale` multiplies both step sizes.
  void step(ParameterSet &params, const GradTable &grads, double lr_scale = 1.0) {
    ++t_;
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    for (auto &p : params.all()) {
      if (!p.trainable) continue;
      auto it = grads.find(p.name);
      if (it == grads.end()) continue;
      const Matrix &g = it->second;
      if (g.rows() != p.storage.rows() || g.cols() != p.storage.cols()) {
        fail(ErrorCode::DimensionMismatch, "adam: gradient shape mismatch for '" + p.name + "'");
      }
      Matrix &m = first_[p.name];
      Matrix &v = second_[p.name];
      if (m.size() == 0) {
        m = Matrix::Zero(g.rows(), g.cols());
        v = Matrix::Zero(g.rows(), g.cols());
      }
      m = opts_.beta1 * m + (1.0 - opts_.beta1) * g;
      v = opts_.beta2 * v + (1.0 - opts_.beta2) * g.cwiseProduct(g);
      const double lr = lr_scale * (p.name.rfind(opts_.bounds_prefix, 0) == 0 ? opts_.bounds_lr : opts_.lr);
      p.storage.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + opts_.eps);
    }
  }

  std::uint64_t steps() const { return t_; }
  const AdamOptions &options() const { return opts_; }

  /// Moment estimates, for checkpointing.
  const std::map<std::string, Matrix> &first_moments() const { return first_; }
  const std::map<std::string, Matrix> &second_moments() const { return second_; }

  void restore(std::uint64_t t, std::map<std::string, Matrix> first, std::map<std::string, Matrix> second) {
    t_ = t;
    first_ = std::move(first);
    second_ = std::move(second);
  }

private:
  AdamOptions opts_;
  std::uint64_t t_ = 0;
  std::map<std::string, Matrix> first_;
  std::map<std::string, Matrix> second_;
};

} // namespace igp::ad
