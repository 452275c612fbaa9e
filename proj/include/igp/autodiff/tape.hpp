#pragma once

#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "igp/autodiff/parameter.hpp"
#include "igp/error.hpp"
#include "igp/numcore/linalg.hpp"

namespace igp::ad {

class Tape;

/// Handle to a recorded node. Cheap to copy; valid while its tape lives.
class Var {
public:
  Var() = default;
  Var(Tape *tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix &value() const;
  double scalar() const { return value()(0, 0); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const;

  Tape *tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

private:
  Tape *tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records the forward pass of one evaluation (one training step) and runs the
/// reverse sweep. Single writer; independent tapes share nothing.
class Tape {
public:
  using Backprop = std::function<void(Tape &, const Matrix &upstream)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Matrix value) { return push(std::move(value), false, nullptr); }
  Var constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

  Var leaf(Matrix value, bool requires_grad = true) {
    return push(std::move(value), requires_grad && grad_enabled_, nullptr);
  }

  /// Records an operation result. `backprop` is dropped when no input needs a
  /// gradient or the tape is in evaluation-only mode.
  Var record(Matrix value, bool any_input_requires_grad, Backprop backprop) {
    const bool rg = any_input_requires_grad && grad_enabled_;
    return push(std::move(value), rg, rg ? std::move(backprop) : nullptr);
  }

  /// Leaf for a named parameter in storage space followed by its transform.
  /// Non-trainable parameters enter as constants and report no gradient.
  Var bind(const ParameterSet &params, const std::string &name);

  const Matrix &value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  void accumulate(std::size_t id, const Matrix &g) {
    Node &n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }
  void accumulate(Var v, const Matrix &g) { accumulate(v.id(), g); }

  /// Gradient of a node after `backward`; zero matrix if nothing flowed in.
  Matrix grad(Var v) const {
    const Node &n = nodes_[v.id()];
    if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// Reverse sweep from a scalar loss. Returns gradients for every trainable
  /// parameter bound on this tape (storage space); unbound parameters are absent.
  GradTable backward(Var loss) {
    if (loss.rows() != 1 || loss.cols() != 1) {
      fail(ErrorCode::NonScalarLoss, "backward: loss is " + std::to_string(loss.rows()) + "x" +
                                         std::to_string(loss.cols()));
    }
    for (auto &n : nodes_) n.grad.resize(0, 0);
    if (nodes_[loss.id()].requires_grad) {
      nodes_[loss.id()].grad = Matrix::Ones(1, 1);
      for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Node &n = nodes_[i];
        if (!n.requires_grad || !n.backprop || n.grad.size() == 0) continue;
        Matrix upstream = std::move(n.grad);
        n.grad.resize(0, 0);
        n.backprop(*this, upstream);
        n.grad = std::move(upstream);
      }
    }
    GradTable table;
    for (const auto &[name, id] : bound_) {
      table[name] = grad(Var(this, id));
    }
    return table;
  }

  std::size_t size() const { return nodes_.size(); }

  /// Drops every node recorded at or after `mark`, along with their bindings.
  void rewind(std::size_t mark) {
    while (nodes_.size() > mark) nodes_.pop_back();
    std::erase_if(bound_, [mark](const auto &b) { return b.second >= mark; });
    std::erase_if(bound_values_, [mark](const auto &b) { return b.second.id() >= mark; });
  }

private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backprop backprop;
  };

  Var push(Matrix value, bool requires_grad, Backprop backprop) {
    nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, std::move(backprop)});
    return Var(this, nodes_.size() - 1);
  }

  bool grad_enabled_;
  std::deque<Node> nodes_;
  std::vector<std::pair<std::string, std::size_t>> bound_;
  std::vector<std::pair<std::string, Var>> bound_values_;
};

inline const Matrix &Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

} // namespace igp::ad
