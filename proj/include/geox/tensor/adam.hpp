#pragma once

#include <cmath>
#include <vector>

#include "geox/tensor/tensor.hpp"

namespace geox {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Scalar>
class Adam {
 public:
  Adam(ParameterStore<Scalar>& store, AdamConfig config) : store_(&store), config_(config) {
    for (const auto& p : store) {
      first_.push_back(Matrix<Scalar>::Zero(p.value.matrix().rows(), p.value.matrix().cols()));
      second_.push_back(first_.back());
    }
  }

  void step() {
    ++steps_;
    const double c1 = 1.0 - std::pow(config_.beta1, double(steps_));
    const double c2 = 1.0 - std::pow(config_.beta2, double(steps_));
    const auto b1 = Scalar(config_.beta1), b2 = Scalar(config_.beta2);
    const auto lr = Scalar(config_.learning_rate / c1);
    const auto inv_c2 = Scalar(1.0 / c2);
    const auto eps = Scalar(config_.epsilon);
    std::size_t i = 0;
    for (auto& p : *store_) {
      if (p.requires_grad) {
        const auto& g = p.grad.matrix();
        first_[i] = b1 * first_[i] + (Scalar(1) - b1) * g;
        second_[i] = b2 * second_[i] + (Scalar(1) - b2) * g.cwiseAbs2();
        p.value.matrix().array() -= lr * first_[i].array() / ((second_[i].array() * inv_c2).sqrt() + eps);
      }
      ++i;
    }
  }

  void zero_grad() { store_->zero_grad(); }
  long steps() const { return steps_; }

 private:
  ParameterStore<Scalar>* store_;
  AdamConfig config_;
  std::vector<Matrix<Scalar>> first_;
  std::vector<Matrix<Scalar>> second_;
  long steps_ = 0;
};

}  // namespace geox
