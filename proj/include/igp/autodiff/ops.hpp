#pragma once

#include <cmath>
#include <string>

#include "igp/autodiff/tape.hpp"
#include "igp/numcore/linalg.hpp"
#include "igp/numcore/special.hpp"

namespace igp::ad {

namespace detail {

inline void require_same_shape(const Var &a, const Var &b, const char *op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorCode::DimensionMismatch, std::string(op) + ": shapes " + std::to_string(a.rows()) + "x" +
                                           std::to_string(a.cols()) + " and " + std::to_string(b.rows()) +
                                           "x" + std::to_string(b.cols()));
  }
}

/// Elementwise map f with pointwise derivative df(x).
template <typename F, typename DF>
Var unary(const Var &a, F &&f, DF &&df) {
  Tape &t = *a.tape();
  Matrix y = a.value().unaryExpr(f);
  const std::size_t ia = a.id();
  return t.record(std::move(y), a.requires_grad(), [ia, df](Tape &tape, const Matrix &up) {
    const Matrix &x = tape.value(ia);
    Matrix g(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      for (Eigen::Index i = 0; i < x.rows(); ++i) g(i, j) = up(i, j) * df(x(i, j));
    }
    tape.accumulate(ia, g);
  });
}

} // namespace detail

inline Var add(const Var &a, const Var &b) {
  detail::require_same_shape(a, b, "add");
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() + b.value(), a.requires_grad() || b.requires_grad(),
                          [ia, ib](Tape &t, const Matrix &up) {
                            t.accumulate(ia, up);
                            t.accumulate(ib, up);
                          });
}

inline Var sub(const Var &a, const Var &b) {
  detail::require_same_shape(a, b, "sub");
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() - b.value(), a.requires_grad() || b.requires_grad(),
                          [ia, ib](Tape &t, const Matrix &up) {
                            t.accumulate(ia, up);
                            t.accumulate(ib, -up);
                          });
}

/// Elementwise product.
inline Var mul(const Var &a, const Var &b) {
  detail::require_same_shape(a, b, "mul");
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(a.value().cwiseProduct(b.value()), a.requires_grad() || b.requires_grad(),
                          [ia, ib](Tape &t, const Matrix &up) {
                            if (t.requires_grad(ia)) t.accumulate(ia, up.cwiseProduct(t.value(ib)));
                            if (t.requires_grad(ib)) t.accumulate(ib, up.cwiseProduct(t.value(ia)));
                          });
}

inline Var scale(const Var &a, double s) {
  const auto ia = a.id();
  return a.tape()->record(a.value() * s, a.requires_grad(),
                          [ia, s](Tape &t, const Matrix &up) { t.accumulate(ia, up * s); });
}

inline Var neg(const Var &a) { return scale(a, -1.0); }

inline Var add_scalar(const Var &a, double s) {
  const auto ia = a.id();
  return a.tape()->record(a.value().array() + s, a.requires_grad(),
                          [ia](Tape &t, const Matrix &up) { t.accumulate(ia, up); });
}

inline Var add_const(const Var &a, const Matrix &c) {
  if (c.rows() != a.rows() || c.cols() != a.cols()) {
    fail(ErrorCode::DimensionMismatch, "add_const: shape mismatch");
  }
  const auto ia = a.id();
  return a.tape()->record(a.value() + c, a.requires_grad(),
                          [ia](Tape &t, const Matrix &up) { t.accumulate(ia, up); });
}

/// Elementwise product with a constant matrix.
inline Var mul_const(const Var &a, const Matrix &c) {
  if (c.rows() != a.rows() || c.cols() != a.cols()) {
    fail(ErrorCode::DimensionMismatch, "mul_const: shape mismatch");
  }
  const auto ia = a.id();
  return a.tape()->record(a.value().cwiseProduct(c), a.requires_grad(),
                          [ia, c](Tape &t, const Matrix &up) { t.accumulate(ia, up.cwiseProduct(c)); });
}

/// 1x1 variable times a matrix.
inline Var scalar_mul(const Var &s, const Var &a) {
  if (s.rows() != 1 || s.cols() != 1) fail(ErrorCode::DimensionMismatch, "scalar_mul: expected 1x1 scale");
  const auto is = s.id(), ia = a.id();
  return a.tape()->record(s.scalar() * a.value(), s.requires_grad() || a.requires_grad(),
                          [is, ia](Tape &t, const Matrix &up) {
                            if (t.requires_grad(is)) {
                              t.accumulate(is, Matrix::Constant(1, 1, up.cwiseProduct(t.value(ia)).sum()));
                            }
                            if (t.requires_grad(ia)) t.accumulate(ia, up * t.value(is)(0, 0));
                          });
}

inline Var matmul(const Var &a, const Var &b) {
  if (a.cols() != b.rows()) {
    fail(ErrorCode::DimensionMismatch, "matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                           " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  const auto ia = a.id(), ib = b.id();
  Matrix y = a.value() * b.value();
  return a.tape()->record(std::move(y), a.requires_grad() || b.requires_grad(),
                          [ia, ib](Tape &t, const Matrix &up) {
                            if (t.requires_grad(ia)) t.accumulate(ia, up * t.value(ib).transpose());
                            if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * up);
                          });
}

inline Var transpose(const Var &a) {
  const auto ia = a.id();
  return a.tape()->record(a.value().transpose(), a.requires_grad(),
                          [ia](Tape &t, const Matrix &up) { t.accumulate(ia, up.transpose()); });
}

inline Var sum(const Var &a) {
  const auto ia = a.id();
  const auto r = a.rows(), c = a.cols();
  return a.tape()->record(Matrix::Constant(1, 1, a.value().sum()), a.requires_grad(),
                          [ia, r, c](Tape &t, const Matrix &up) {
                            t.accumulate(ia, Matrix::Constant(r, c, up(0, 0)));
                          });
}

/// Sum across columns: (n x k) -> (n x 1).
inline Var row_sum(const Var &a) {
  const auto ia = a.id();
  const auto c = a.cols();
  return a.tape()->record(a.value().rowwise().sum(), a.requires_grad(),
                          [ia, c](Tape &t, const Matrix &up) { t.accumulate(ia, up.replicate(1, c)); });
}

/// Repeats a (1 x k) row n times.
inline Var broadcast_rows(const Var &a, Eigen::Index n) {
  if (a.rows() != 1) fail(ErrorCode::DimensionMismatch, "broadcast_rows: expected a single row");
  const auto ia = a.id();
  return a.tape()->record(a.value().replicate(n, 1), a.requires_grad(),
                          [ia](Tape &t, const Matrix &up) { t.accumulate(ia, up.colwise().sum()); });
}

/// Sums consecutive blocks of `group` rows: (n*group x k) -> (n x k).
inline Var group_sum(const Var &a, Eigen::Index group) {
  if (group <= 0 || a.rows() % group != 0) {
    fail(ErrorCode::DimensionMismatch, "group_sum: rows not divisible by group size");
  }
  const Eigen::Index n = a.rows() / group;
  Matrix y = Matrix::Zero(n, a.cols());
  const Matrix &x = a.value();
  for (Eigen::Index i = 0; i < n; ++i) y.row(i) = x.middleRows(i * group, group).colwise().sum();
  const auto ia = a.id();
  return a.tape()->record(std::move(y), a.requires_grad(), [ia, group, n](Tape &t, const Matrix &up) {
    Matrix g(n * group, up.cols());
    for (Eigen::Index i = 0; i < n; ++i) g.middleRows(i * group, group) = up.row(i).replicate(group, 1);
    t.accumulate(ia, g);
  });
}

/// Side-by-side concatenation of blocks with equal row counts.
inline Var hcat(const std::vector<Var> &parts) {
  if (parts.empty()) fail(ErrorCode::DimensionMismatch, "hcat: nothing to concatenate");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  bool rg = false;
  for (const auto &p : parts) {
    if (p.rows() != rows) fail(ErrorCode::DimensionMismatch, "hcat: row counts differ");
    cols += p.cols();
    rg = rg || p.requires_grad();
  }
  Matrix y(rows, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> spans;
  Eigen::Index at = 0;
  for (const auto &p : parts) {
    y.middleCols(at, p.cols()) = p.value();
    spans.emplace_back(p.id(), p.cols());
    at += p.cols();
  }
  return parts.front().tape()->record(std::move(y), rg, [spans](Tape &t, const Matrix &up) {
    Eigen::Index start = 0;
    for (const auto &[id, width] : spans) {
      t.accumulate(id, up.middleCols(start, width));
      start += width;
    }
  });
}

inline Var square(const Var &a) {
  return detail::unary(a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

inline Var exp(const Var &a) {
  return detail::unary(a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

inline Var log(const Var &a) {
  return detail::unary(a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

inline Var softplus(const Var &a) {
  return detail::unary(a, [](double x) { return igp::softplus(x); }, [](double x) { return igp::sigmoid(x); });
}

inline Var tanh(const Var &a) {
  return detail::unary(a, [](double x) { return std::tanh(x); },
                       [](double x) {
                         const double th = std::tanh(x);
                         return 1.0 - th * th;
                       });
}

inline Var cos(const Var &a) {
  return detail::unary(a, [](double x) { return std::cos(x); }, [](double x) { return -std::sin(x); });
}

inline Var sin(const Var &a) {
  return detail::unary(a, [](double x) { return std::sin(x); }, [](double x) { return std::cos(x); });
}

inline Var pg_mean(const Var &a) {
  return detail::unary(a, [](double c) { return igp::pg_mean(c); },
                       [](double c) { return igp::pg_mean_derivative(c); });
}

inline Var pg_kl(const Var &a) {
  return detail::unary(a, [](double c) { return igp::pg_kl(c); }, [](double c) { return igp::pg_kl_derivative(c); });
}

inline Var apply_transform(const Var &a, Transform transform) {
  switch (transform) {
  case Transform::identity: return a;
  case Transform::exp: return exp(a);
  case Transform::softplus: return softplus(a);
  }
  return a;
}

struct CholResult {
  Var L;
  double jitter = 0.0;
};

/// Differentiable Cholesky factor. The jitter chosen in the forward pass is a
/// constant; the reverse pass uses L^{-T} Phi(L^T Lbar) L^{-1}, symmetrised,
/// where Phi keeps the lower triangle and halves the diagonal.
inline CholResult cholesky(const Var &a, double max_jitter = 1e-2) {
  CholFactor f = igp::cholesky(a.value(), max_jitter);
  const auto ia = a.id();
  Tape &t = *a.tape();
  const std::size_t self = t.size();
  Var L = t.record(std::move(f.L), a.requires_grad(), [ia, self](Tape &tape, const Matrix &up) {
    const Matrix &Lv = tape.value(self);
    Matrix phi = (Lv.transpose() * up.triangularView<Eigen::Lower>().toDenseMatrix())
                     .triangularView<Eigen::Lower>();
    phi.diagonal() *= 0.5;
    const auto LT = Lv.transpose().triangularView<Eigen::Upper>();
    Matrix tmp = LT.solve(phi);                            // L^{-T} phi
    Matrix S = LT.solve(tmp.transpose()).transpose();      // (L^{-T} phi) L^{-1}
    tape.accumulate(ia, 0.5 * (S + S.transpose()));
  });
  return {L, f.jitter};
}

/// Solves L X = B (or L^T X = B) for lower-triangular L.
inline Var tri_solve(const Var &L, const Var &B, bool transpose = false) {
  Matrix X = igp::tri_solve(L.value(), B.value(), transpose);
  const auto il = L.id(), ib = B.id();
  Tape &t = *L.tape();
  const std::size_t self = t.size();
  return t.record(std::move(X), L.requires_grad() || B.requires_grad(),
                  [il, ib, self, transpose](Tape &tape, const Matrix &up) {
                    const Matrix &Lv = tape.value(il);
                    Matrix Bbar = igp::tri_solve(Lv, up, !transpose);
                    if (tape.requires_grad(il)) {
                      const Matrix &Xv = tape.value(self);
                      Matrix Lbar = transpose ? Matrix(-Xv * Bbar.transpose()) : Matrix(-Bbar * Xv.transpose());
                      tape.accumulate(il, Lbar.triangularView<Eigen::Lower>().toDenseMatrix());
                    }
                    tape.accumulate(ib, Bbar);
                  });
}

/// Sum of log diagonal entries.
inline Var log_diag_sum(const Var &a) {
  const auto ia = a.id();
  const Eigen::Index n = std::min(a.rows(), a.cols());
  return a.tape()->record(Matrix::Constant(1, 1, a.value().diagonal().array().log().sum()), a.requires_grad(),
                          [ia, n](Tape &t, const Matrix &up) {
                            const Matrix &x = t.value(ia);
                            Matrix g = Matrix::Zero(x.rows(), x.cols());
                            for (Eigen::Index i = 0; i < n; ++i) g(i, i) = up(0, 0) / x(i, i);
                            t.accumulate(ia, g);
                          });
}

/// Lower triangle of a raw square matrix with softplus applied on the diagonal,
/// giving a Cholesky factor with strictly positive diagonal.
inline Var tril_softplus_diag(const Var &raw) {
  if (raw.rows() != raw.cols()) fail(ErrorCode::DimensionMismatch, "tril_softplus_diag: expected square");
  Matrix y = raw.value().triangularView<Eigen::Lower>();
  for (Eigen::Index i = 0; i < y.rows(); ++i) y(i, i) = igp::softplus(raw.value()(i, i));
  const auto ia = raw.id();
  return raw.tape()->record(std::move(y), raw.requires_grad(), [ia](Tape &t, const Matrix &up) {
    const Matrix &x = t.value(ia);
    Matrix g = up.triangularView<Eigen::Lower>();
    for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, i) = up(i, i) * igp::sigmoid(x(i, i));
    t.accumulate(ia, g);
  });
}

inline Var Tape::bind(const ParameterSet &params, const std::string &name) {
  for (const auto &[bound_name, v] : bound_values_) {
    if (bound_name == name) return v;
  }
  const Parameter &p = params.at(name);
  const bool rg = p.trainable && grad_enabled_;
  Var storage = leaf(p.storage, rg);
  if (rg) bound_.emplace_back(name, storage.id());
  Var value = apply_transform(storage, p.transform);
  bound_values_.emplace_back(name, value);
  return value;
}

} // namespace igp::ad
