#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "igp/autodiff/ops.hpp"
#include "igp/numcore/rng.hpp"

namespace igp::ad {

/// A loss built on the given tape from parameter values. Must be a
/// deterministic function of (params, stream).
using LossFn = std::function<Var(Tape &, const ParameterSet &, const RngStream &)>;

struct GradCheckOptions {
  double eps = 1e-3;
  /// Restrict to these parameter names; empty checks every trainable parameter.
  std::vector<std::string> only;
  /// Check at most this many entries per parameter (spread evenly); 0 = all.
  Eigen::Index max_entries = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  Eigen::Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t entries_checked = 0;
};

inline double evaluate_loss(const LossFn &fn, const ParameterSet &params, const RngStream &stream) {
  Tape tape(false);
  return fn(tape, params, stream).scalar();
}

/// Compares reverse-mode gradients with central differences in storage space.
/// Error per entry: |g - g_fd| / max(1e-8, |g| + |g_fd|).
inline GradCheckReport check_grad(const LossFn &fn, const ParameterSet &params, const RngStream &stream,
                                  const GradCheckOptions &opts = {}) {
  GradTable analytic;
  {
    Tape tape(true);
    Var loss = fn(tape, params, stream);
    analytic = tape.backward(loss);
  }
  GradCheckReport report;
  ParameterSet work = params;
  for (auto &p : work.all()) {
    if (!p.trainable) continue;
    if (!opts.only.empty() && std::find(opts.only.begin(), opts.only.end(), p.name) == opts.only.end()) continue;
    auto it = analytic.find(p.name);
    const Matrix g = it != analytic.end() ? it->second : Matrix::Zero(p.storage.rows(), p.storage.cols());
    const Eigen::Index total = p.storage.size();
    const Eigen::Index count = opts.max_entries > 0 ? std::min(opts.max_entries, total) : total;
    for (Eigen::Index k = 0; k < count; ++k) {
      const Eigen::Index idx = count == total ? k : (k * total) / count;
      double &x = p.storage.data()[idx];
      const double saved = x;
      x = saved + opts.eps;
      const double up = evaluate_loss(fn, work, stream);
      x = saved - opts.eps;
      const double down = evaluate_loss(fn, work, stream);
      x = saved;
      const double fd = (up - down) / (2.0 * opts.eps);
      const double an = g.data()[idx];
      const double err = std::abs(an - fd) / std::max(1e-8, std::abs(an) + std::abs(fd));
      ++report.entries_checked;
      if (err > report.max_rel_error || report.worst_index < 0) {
        if (err >= report.max_rel_error) {
          report.max_rel_error = err;
          report.worst_param = p.name;
          report.worst_index = idx;
          report.analytic = an;
          report.numeric = fd;
        }
      }
    }
  }
  return report;
}

} // namespace igp::ad
