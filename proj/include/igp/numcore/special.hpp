#pragma once

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

namespace igp {

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// Inverse of softplus for y > 0.
inline double softplus_inverse(double y) {
  return y > 30.0 ? y : std::log(std::expm1(y));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double log_sigmoid(double x) { return -softplus(-x); }

/// log cosh(x) without overflow.
inline double log_cosh(double x) {
  const double a = std::abs(x);
  return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
}

/// Mean of the tilted Polya-Gamma PG(1, c): tanh(c/2) / (2c), with limit 1/4.
inline double pg_mean(double c) {
  if (std::abs(c) < 1e-4) return 0.25 - c * c / 48.0;
  return std::tanh(0.5 * c) / (2.0 * c);
}

inline double pg_mean_derivative(double c) {
  if (std::abs(c) < 1e-3) return -c / 24.0 + c * c * c / 120.0;
  const double t = std::tanh(0.5 * c);
  const double sech2 = 1.0 - t * t;
  return (c * sech2 - 2.0 * t) / (4.0 * c * c);
}

/// KL(PG(1, c) || PG(1, 0)) = log cosh(c/2) - (c/4) tanh(c/2).
inline double pg_kl(double c) {
  const double x = 0.5 * std::abs(c);
  if (x < 1e-3) {
    const double x2 = x * x;
    return x2 * x2 * (1.0 / 12.0 - x2 * (2.0 / 45.0 - x2 * 17.0 / 840.0));
  }
  const double lc = x < 1.0 ? std::log(std::cosh(x)) : log_cosh(x);
  return lc - 0.5 * x * std::tanh(x);
}

inline double pg_kl_derivative(double c) {
  const double t = std::tanh(0.5 * c);
  return 0.25 * t - 0.125 * c * (1.0 - t * t);
}

/// Nodes and weights of n-point Gauss-Hermite quadrature for the weight
/// exp(-x^2). Newton iteration on the orthonormal Hermite recurrence.
struct GaussHermite {
  std::vector<double> nodes;
  std::vector<double> weights;
};

inline GaussHermite gauss_hermite(int n) {
  GaussHermite gh;
  gh.nodes.assign(static_cast<std::size_t>(n), 0.0);
  gh.weights.assign(static_cast<std::size_t>(n), 0.0);
  const double pim4 = 0.7511255444649425; // pi^{-1/4}
  const int m = (n + 1) / 2;
  double z = 0.0;
  for (int i = 0; i < m; ++i) {
    if (i == 0) {
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
    } else if (i == 1) {
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * gh.nodes[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * gh.nodes[1];
    } else {
      z = 2.0 * z - gh.nodes[static_cast<std::size_t>(i - 2)];
    }
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = pim4;
      double p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-15) break;
    }
    gh.nodes[static_cast<std::size_t>(i)] = z;
    gh.nodes[static_cast<std::size_t>(n - 1 - i)] = -z;
    gh.weights[static_cast<std::size_t>(i)] = 2.0 / (pp * pp);
    gh.weights[static_cast<std::size_t>(n - 1 - i)] = gh.weights[static_cast<std::size_t>(i)];
  }
  return gh;
}

/// E[h(f)] for f ~ N(mean, var) by n-point Gauss-Hermite.
template <typename F>
double gaussian_expectation(const GaussHermite &gh, double mean, double var, F &&h) {
  const double sd = std::sqrt(std::max(var, 0.0));
  double acc = 0.0;
  for (std::size_t i = 0; i < gh.nodes.size(); ++i) {
    acc += gh.weights[i] * h(mean + std::numbers::sqrt2 * sd * gh.nodes[i]);
  }
  return acc / std::sqrt(std::numbers::pi);
}

} // namespace igp
