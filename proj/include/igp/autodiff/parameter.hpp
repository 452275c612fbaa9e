#pragma once

#include <cmath>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "igp/error.hpp"
#include "igp/numcore/linalg.hpp"
#include "igp/numcore/special.hpp"

namespace igp::ad {

/// Maps unconstrained storage to the constrained value seen by the model.
enum class Transform { identity, exp, softplus };

inline double forward_transform(Transform t, double x) {
  switch (t) {
  case Transform::identity: return x;
  case Transform::exp: return std::exp(x);
  case Transform::softplus: return softplus(x);
  }
  return x;
}

inline double inverse_transform(Transform t, double y) {
  switch (t) {
  case Transform::identity: return y;
  case Transform::exp: return std::log(y);
  case Transform::softplus: return softplus_inverse(y);
  }
  return y;
}

struct Parameter {
  std::string name;
  Matrix storage;
  Transform transform = Transform::identity;
  bool trainable = true;

  Matrix value() const {
    return storage.unaryExpr([t = transform](double x) { return forward_transform(t, x); });
  }
};

/// Named parameters in insertion order. Names are unique.
class ParameterSet {
public:
  Parameter &add(const std::string &name, const Matrix &value, Transform transform = Transform::identity,
                 bool trainable = true) {
    if (index_.count(name) != 0) {
      fail(ErrorCode::BadConfig, "duplicate parameter name '" + name + "'");
    }
    Parameter p{name, value.unaryExpr([transform](double y) { return inverse_transform(transform, y); }),
                transform, trainable};
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return params_.back();
  }

  Parameter &add_scalar(const std::string &name, double value, Transform transform = Transform::identity,
                        bool trainable = true) {
    return add(name, Matrix::Constant(1, 1, value), transform, trainable);
  }

  bool contains(const std::string &name) const { return index_.count(name) != 0; }

  const Parameter &at(const std::string &name) const { return params_[lookup(name)]; }
  Parameter &at(const std::string &name) { return params_[lookup(name)]; }

  Matrix value(const std::string &name) const { return at(name).value(); }
  double scalar(const std::string &name) const { return at(name).value()(0, 0); }

  void set_value(const std::string &name, const Matrix &value) {
    auto &p = at(name);
    p.storage = value.unaryExpr([t = p.transform](double y) { return inverse_transform(t, y); });
  }

  const std::vector<Parameter> &all() const { return params_; }
  std::vector<Parameter> &all() { return params_; }

  std::size_t size() const { return params_.size(); }

private:
  std::size_t lookup(const std::string &name) const {
    auto it = index_.find(name);
    if (it == index_.end()) fail(ErrorCode::BadConfig, "unknown parameter '" + name + "'");
    return it->second;
  }

  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Gradients with respect to unconstrained storage, keyed by parameter name.
using GradTable = std::map<std::string, Matrix>;

} // namespace igp::ad
