#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace igp {

namespace detail {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

} // namespace detail

enum class DrawKind { uniform01, standard_normal };

/// Counter-based random stream addressed by (seed, path, counter). Copies are
/// independent values; `child` derives a new stream for a sub-consumer.
class RngStream {
public:
  explicit RngStream(std::uint64_t seed = 0, std::vector<std::string> path = {})
      : seed_(seed), path_(std::move(path)) {
    rekey();
  }

  RngStream child(std::string_view label) const {
    auto path = path_;
    path.emplace_back(label);
    return RngStream(seed_, std::move(path));
  }

  std::uint64_t seed() const { return seed_; }
  const std::vector<std::string> &path() const { return path_; }
  std::uint64_t counter() const { return counter_; }

  std::string path_string() const {
    std::string out;
    for (const auto &p : path_) {
      if (!out.empty()) out += '/';
      out += p;
    }
    return out;
  }

  /// Raw 64 random bits at the current counter; advances the counter.
  std::uint64_t next_u64() {
    return detail::mix64(key_ ^ detail::mix64(++counter_ * detail::kGolden));
  }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() {
    // Box-Muller, one output per pair of uniforms so every draw owns its counters.
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
  }

private:
  void rekey() {
    std::uint64_t k = detail::mix64(seed_ + detail::kGolden);
    for (const auto &label : path_) {
      k = detail::mix64(k ^ detail::fnv1a(label)) + detail::kGolden;
    }
    key_ = k;
  }

  std::uint64_t seed_;
  std::vector<std::string> path_;
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

inline Eigen::VectorXd draw(RngStream &stream, DrawKind kind, Eigen::Index n) {
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out[i] = kind == DrawKind::uniform01 ? stream.uniform() : stream.normal();
  }
  return out;
}

inline Eigen::MatrixXd draw_matrix(RngStream &stream, DrawKind kind, Eigen::Index rows,
                                   Eigen::Index cols) {
  Eigen::MatrixXd out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      out(i, j) = kind == DrawKind::uniform01 ? stream.uniform() : stream.normal();
    }
  }
  return out;
}

/// First `k` entries of a uniformly random permutation of 0..n-1.
inline std::vector<Eigen::Index> sample_without_replacement(RngStream &stream, Eigen::Index n,
                                                            Eigen::Index k) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto j = i + static_cast<Eigen::Index>(stream.below(static_cast<std::uint64_t>(n - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

} // namespace igp
