#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace geox {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

/// Dense row-major tensor. Data of rank k is held as a matrix whose rows are
/// the flattened leading extents and whose columns are the last extent; a
/// scalar is 1x1 and a vector of n is 1xn.
template <typename Scalar>
class Tensor {
 public:
  Tensor() : Tensor(Shape{}) {}

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    auto [r, c] = matrix_dims(shape_);
    data_ = Matrix<Scalar>::Zero(r, c);
  }

  Tensor(Shape shape, Matrix<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
    auto [r, c] = matrix_dims(shape_);
    if (static_cast<std::size_t>(data_.size()) != shape_numel(shape_)) {
      throw ShapeError("tensor: shape " + shape_string(shape_) + " holds " +
                       std::to_string(shape_numel(shape_)) + " values, data has " +
                       std::to_string(data_.size()));
    }
    if (data_.rows() != r || data_.cols() != c) data_.resize(r, c);
  }

  static Tensor from_matrix(Matrix<Scalar> m) {
    Shape s{static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())};
    return Tensor(std::move(s), std::move(m));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return static_cast<std::size_t>(data_.size()); }

  Matrix<Scalar>& matrix() { return data_; }
  const Matrix<Scalar>& matrix() const { return data_; }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

  static std::pair<Eigen::Index, Eigen::Index> matrix_dims(const Shape& shape) {
    if (shape.empty()) return {1, 1};
    if (shape.size() == 1) return {1, static_cast<Eigen::Index>(shape[0])};
    std::size_t lead = 1;
    for (std::size_t i = 0; i + 1 < shape.size(); ++i) lead *= shape[i];
    return {static_cast<Eigen::Index>(lead), static_cast<Eigen::Index>(shape.back())};
  }

 private:
  Shape shape_;
  Matrix<Scalar> data_;
};

/// A learned tensor and its gradient accumulator.
template <typename Scalar>
struct Parameter {
  std::string name;
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  bool requires_grad = true;
};

/// Ordered, name-unique collection of parameters. Models refer to their
/// parameters by handle so that copying a store copies the model.
template <typename Scalar>
class ParameterStore {
 public:
  using Handle = std::size_t;

  Handle add(std::string name, Tensor<Scalar> init, bool requires_grad = true) {
    if (find(name)) throw std::invalid_argument("parameter store: duplicate name '" + name + "'");
    Tensor<Scalar> grad(init.shape());
    params_.push_back(Parameter<Scalar>{std::move(name), std::move(init), std::move(grad), requires_grad});
    return params_.size() - 1;
  }

  Parameter<Scalar>& operator[](Handle h) { return params_.at(h); }
  const Parameter<Scalar>& operator[](Handle h) const { return params_.at(h); }

  std::optional<Handle> find(const std::string& name) const {
    for (Handle h = 0; h < params_.size(); ++h) {
      if (params_[h].name == name) return h;
    }
    return std::nullopt;
  }

  Parameter<Scalar>& at(const std::string& name) {
    auto h = find(name);
    if (!h) throw std::out_of_range("parameter store: no parameter '" + name + "'");
    return params_[*h];
  }

  std::size_t size() const { return params_.size(); }
  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad() {
    for (auto& p : params_) p.grad.matrix().setZero();
  }

  void set_requires_grad(bool flag) {
    for (auto& p : params_) p.requires_grad = flag;
  }

  template <typename Other>
  ParameterStore<Other> cast() const {
    ParameterStore<Other> out;
    for (const auto& p : params_) out.add(p.name, p.value.template cast<Other>(), p.requires_grad);
    return out;
  }

  bool same_values(const ParameterStore& other) const {
    if (params_.size() != other.params_.size()) return false;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (params_[i].name != other.params_[i].name || !(params_[i].value == other.params_[i].value)) {
        return false;
      }
    }
    return true;
  }

 private:
  std::vector<Parameter<Scalar>> params_;
};

}  // namespace geox
