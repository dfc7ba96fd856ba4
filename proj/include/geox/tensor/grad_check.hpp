#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "geox/tensor/tape.hpp"

namespace geox {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

/// Compares tape gradients of a scalar objective against central finite
/// differences over every element of every trainable parameter. The error per
/// element is |autodiff - fd| / max(1, |fd|).
template <typename Scalar>
GradCheckResult grad_check(const std::function<Var<Scalar>(Tape<Scalar>&)>& objective, ParameterStore<Scalar>& params,
                           double step = 1e-5) {
  params.zero_grad();
  {
    Tape<Scalar> tape;
    tape.backward(objective(tape));
  }
  auto evaluate = [&]() {
    Tape<Scalar> tape(false);
    return static_cast<double>(objective(tape).item());
  };
  GradCheckResult result;
  for (auto& p : params) {
    if (!p.requires_grad) continue;
    auto& values = p.value.matrix();
    for (Eigen::Index i = 0; i < values.size(); ++i) {
      const Scalar saved = values.data()[i];
      values.data()[i] = static_cast<Scalar>(saved + step);
      const double up = evaluate();
      values.data()[i] = static_cast<Scalar>(saved - step);
      const double down = evaluate();
      values.data()[i] = saved;
      const double fd = (up - down) / (2.0 * step);
      const double ad = static_cast<double>(p.grad.matrix().data()[i]);
      const double err = std::abs(ad - fd) / std::max(1.0, std::abs(fd));
      ++result.checked;
      if (err > result.max_relative_error || !std::isfinite(err)) {
        result.max_relative_error = std::isfinite(err) ? err : INFINITY;
        result.worst_parameter = p.name;
        result.worst_index = static_cast<std::size_t>(i);
      }
    }
  }
  params.zero_grad();
  return result;
}

}  // namespace geox
