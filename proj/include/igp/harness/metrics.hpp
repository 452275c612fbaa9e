#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "igp/harness/config.hpp"

namespace igp::harness {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

/// One evaluation event. Column order of metrics.csv:
///   step, elbo, data_fit, kl, train_elbo, test_error_pct, test_nlpd, test_rmse, alpha_deg, halfwidth_mean
/// elbo/data_fit/kl are the minibatch estimate of the latest optimiser step;
/// train_elbo uses the whole training set. Missing values print as "nan".
/// Wall-clock time lives in timing.csv (step, wall_seconds) so that metrics.csv
/// is a deterministic function of the config.
struct MetricsRow {
  std::uint64_t step = 0;
  double elbo = kMissing;
  double data_fit = kMissing;
  double kl = kMissing;
  double train_elbo = kMissing;
  double test_error_pct = kMissing;
  double test_nlpd = kMissing;
  double test_rmse = kMissing;
  double alpha_deg = kMissing;
  double halfwidth_mean = kMissing;
};

inline const std::string &metrics_header() {
  static const std::string h =
      "step,elbo,data_fit,kl,train_elbo,test_error_pct,test_nlpd,test_rmse,alpha_deg,halfwidth_mean";
  return h;
}

inline std::string format_row(const MetricsRow &r) {
  std::string out = std::to_string(r.step);
  for (double v : {r.elbo, r.data_fit, r.kl, r.train_elbo, r.test_error_pct, r.test_nlpd, r.test_rmse, r.alpha_deg,
                   r.halfwidth_mean}) {
    out += ',';
    out += std::isnan(v) ? std::string("nan") : detail::format_double(v);
  }
  return out;
}

/// Append-only CSV with a header line. Opening an existing file keeps rows up
/// to and including `keep_through` and drops the rest, so a resumed run
/// rewrites exactly what an uninterrupted run would have written.
class CsvLog {
public:
  CsvLog(std::string path, std::string header, std::int64_t keep_through = -1)
      : path_(std::move(path)), header_(std::move(header)) {
    std::vector<std::string> kept;
    if (keep_through >= 0) {
      std::ifstream in(path_);
      std::string line;
      bool first = true;
      while (std::getline(in, line)) {
        if (first) { first = false; continue; }
        if (line.empty()) continue;
        if (std::stoll(line.substr(0, line.find(','))) <= keep_through) kept.push_back(line);
      }
    }
    std::ofstream out(path_, std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write '" + path_ + "'");
    out << header_ << "\n";
    for (const auto &l : kept) out << l << "\n";
  }

  void append(const std::string &line) {
    std::ofstream out(path_, std::ios::app);
    if (!out) fail(ErrorCode::IoError, "cannot append to '" + path_ + "'");
    out << line << "\n";
  }

  const std::string &path() const { return path_; }

private:
  std::string path_;
  std::string header_;
};

} // namespace igp::harness
