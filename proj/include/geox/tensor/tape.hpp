#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include "geox/tensor/tensor.hpp"

namespace geox {

template <typename Scalar>
class Tape;

/// Handle to a value recorded on a tape.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Tape<Scalar>* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape<Scalar>& tape() const { return *tape_; }
  std::size_t index() const { return index_; }
  const Matrix<Scalar>& value() const { return tape_->value(index_); }
  const Matrix<Scalar>& grad() const { return tape_->grad(index_); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Scalar item() const;
  bool requires_grad() const { return tape_->requires_grad(index_); }

 private:
  Tape<Scalar>* tape_ = nullptr;
  std::size_t index_ = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so every node's
/// inputs precede it and a reverse sweep is a valid topological traversal.
/// With recording disabled the tape only evaluates values.
template <typename Scalar>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var<Scalar> constant(Matrix<Scalar> value) {
    nodes_.push_back(Node{std::move(value), {}, false, {}, nullptr, 0, "constant"});
    return Var<Scalar>(this, nodes_.size() - 1);
  }

  Var<Scalar> scalar(Scalar v) {
    Matrix<Scalar> m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  /// Leaf bound to a stored parameter; backward accumulates into its grad.
  Var<Scalar> parameter(ParameterStore<Scalar>& store, typename ParameterStore<Scalar>::Handle h) {
    const bool rg = record_ && store[h].requires_grad;
    nodes_.push_back(Node{store[h].value.matrix(), {}, rg, {}, &store, h, "parameter"});
    return Var<Scalar>(this, nodes_.size() - 1);
  }

  /// Appends the result of a primitive. The backward closure is kept only when
  /// recording and at least one input requires a gradient.
  Var<Scalar> push(Matrix<Scalar> value, std::initializer_list<Var<Scalar>> inputs, const char* op,
                   BackwardFn backward) {
    return push_span(std::move(value), std::vector<Var<Scalar>>(inputs), op, std::move(backward));
  }

  Var<Scalar> push_span(Matrix<Scalar> value, const std::vector<Var<Scalar>>& inputs, const char* op,
                        BackwardFn backward) {
    bool rg = false;
    if (record_) {
      for (const auto& in : inputs) rg = rg || nodes_[in.index()].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, rg, rg ? std::move(backward) : BackwardFn{}, nullptr, 0, op});
    return Var<Scalar>(this, nodes_.size() - 1);
  }

  const Matrix<Scalar>& value(std::size_t i) const { return nodes_[i].value; }
  bool requires_grad(std::size_t i) const { return nodes_[i].requires_grad; }
  const char* op_name(std::size_t i) const { return nodes_[i].op; }

  /// Gradient buffer of node i, allocated as zeros on first access.
  Matrix<Scalar>& grad(std::size_t i) {
    auto& n = nodes_[i];
    if (n.grad.size() == 0 && n.value.size() != 0) n.grad = Matrix<Scalar>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }
  const Matrix<Scalar>& grad(std::size_t i) const { return nodes_[i].grad; }

  template <typename Expr>
  void accumulate(std::size_t i, const Expr& g) {
    if (!nodes_[i].requires_grad) return;
    grad(i) += g;
  }

  /// Propagates d(loss)/d(node) to every leaf. Parameter grads accumulate
  /// across calls; intermediate grads are recomputed each call.
  void backward(Var<Scalar> loss) {
    if (loss.value().rows() != 1 || loss.value().cols() != 1) {
      throw ShapeError("backward: loss must be scalar, got (" + std::to_string(loss.value().rows()) + "," +
                       std::to_string(loss.value().cols()) + ")");
    }
    if (&loss.tape() != this) throw std::invalid_argument("backward: loss belongs to another tape");
    for (auto& n : nodes_) {
      if (n.grad.size() != 0) n.grad.setZero();
    }
    visits_ = 0;
    if (!nodes_[loss.index()].requires_grad) return;
    grad(loss.index())(0, 0) = Scalar(1);
    for (std::size_t k = loss.index() + 1; k-- > 0;) {
      auto& n = nodes_[k];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      ++visits_;
      if (n.store) {
        (*n.store)[n.handle].grad.matrix() += n.grad;
      } else if (n.backward) {
        n.backward(*this, k);
      }
    }
  }

  /// Nodes processed by the most recent backward sweep.
  std::size_t last_backward_visits() const { return visits_; }

  void reset() {
    nodes_.clear();
    visits_ = 0;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix<Scalar> value;
    Matrix<Scalar> grad;
    bool requires_grad;
    BackwardFn backward;
    ParameterStore<Scalar>* store;
    typename ParameterStore<Scalar>::Handle handle;
    const char* op;
  };

  bool record_;
  std::vector<Node> nodes_;
  std::size_t visits_ = 0;
};

template <typename Scalar>
Scalar Var<Scalar>::item() const {
  if (rows() != 1 || cols() != 1) throw ShapeError("item: value is not scalar");
  return value()(0, 0);
}

}  // namespace geox
