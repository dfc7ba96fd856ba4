#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "geox/tensor/tape.hpp"

namespace geox {

// Primitive operations on tape values. Every operation validates operand
// shapes and throws ShapeError naming itself and the offending shapes.

namespace detail {

template <typename Scalar>
std::string dims(const Matrix<Scalar>& m) {
  return "(" + std::to_string(m.rows()) + "," + std::to_string(m.cols()) + ")";
}

template <typename Scalar>
[[noreturn]] void shape_fail(const char* op, const Matrix<Scalar>& a, const Matrix<Scalar>& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + dims(a) + " and " + dims(b));
}

template <typename Scalar>
void require_same_tape(const Var<Scalar>& a, const Var<Scalar>& b, const char* op) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument(std::string(op) + ": operands on different tapes");
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_tape(a, b, "matmul");
  if (a.cols() != b.rows()) detail::shape_fail("matmul", a.value(), b.value());
  Matrix<Scalar> out = a.value() * b.value();
  const auto ia = a.index(), ib = b.index();
  return a.tape().push(std::move(out), {a, b}, "matmul", [ia, ib](Tape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

template <typename Scalar>
Var<Scalar> transpose(Var<Scalar> a) {
  Matrix<Scalar> out = a.value().transpose();
  const auto ia = a.index();
  return a.tape().push(std::move(out), {a}, "transpose", [ia](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(ia, t.grad(self).transpose());
  });
}

/// Elementwise sum. A 1xn right operand is expanded over the rows of the left.
template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_tape(a, b, "add");
  const auto ia = a.index(), ib = b.index();
  if (a.rows() == b.rows() && a.cols() == b.cols()) {
    Matrix<Scalar> out = a.value() + b.value();
    return a.tape().push(std::move(out), {a, b}, "add", [ia, ib](Tape<Scalar>& t, std::size_t self) {
      t.accumulate(ia, t.grad(self));
      t.accumulate(ib, t.grad(self));
    });
  }
  if (b.rows() == 1 && a.cols() == b.cols()) {
    Matrix<Scalar> out = a.value().rowwise() + b.value().row(0);
    return a.tape().push(std::move(out), {a, b}, "add", [ia, ib](Tape<Scalar>& t, std::size_t self) {
      t.accumulate(ia, t.grad(self));
      t.accumulate(ib, t.grad(self).colwise().sum());
    });
  }
  detail::shape_fail("add", a.value(), b.value());
}

/// Elementwise difference, with the same row expansion as add.
template <typename Scalar>
Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_tape(a, b, "sub");
  const auto ia = a.index(), ib = b.index();
  if (a.rows() == b.rows() && a.cols() == b.cols()) {
    Matrix<Scalar> out = a.value() - b.value();
    return a.tape().push(std::move(out), {a, b}, "sub", [ia, ib](Tape<Scalar>& t, std::size_t self) {
      t.accumulate(ia, t.grad(self));
      t.accumulate(ib, -t.grad(self));
    });
  }
  if (b.rows() == 1 && a.cols() == b.cols()) {
    Matrix<Scalar> out = a.value().rowwise() - b.value().row(0);
    return a.tape().push(std::move(out), {a, b}, "sub", [ia, ib](Tape<Scalar>& t, std::size_t self) {
      t.accumulate(ia, t.grad(self));
      t.accumulate(ib, -t.grad(self).colwise().sum());
    });
  }
  detail::shape_fail("sub", a.value(), b.value());
}

/// Hadamard product.
template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_tape(a, b, "mul");
  if (a.rows() != b.rows() || a.cols() != b.cols()) detail::shape_fail("mul", a.value(), b.value());
  Matrix<Scalar> out = a.value().cwiseProduct(b.value());
  const auto ia = a.index(), ib = b.index();
  return a.tape().push(std::move(out), {a, b}, "mul", [ia, ib](Tape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar s) {
  Matrix<Scalar> out = a.value() * s;
  const auto ia = a.index();
  return a.tape().push(std::move(out), {a}, "scale", [ia, s](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(ia, t.grad(self) * s);
  });
}

template <typename Scalar>
Var<Scalar> add_scalar(Var<Scalar> a, Scalar s) {
  Matrix<Scalar> out = a.value().array() + s;
  const auto ia = a.index();
  return a.tape().push(std::move(out), {a}, "add_scalar", [ia](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(ia, t.grad(self));
  });
}

template <typename Scalar>
Var<Scalar> operator+(Var<Scalar> a, Var<Scalar> b) { return add(a, b); }
template <typename Scalar>
Var<Scalar> operator-(Var<Scalar> a, Var<Scalar> b) { return sub(a, b); }
template <typename Scalar>
Var<Scalar> operator-(Var<Scalar> a) { return scale(a, Scalar(-1)); }
template <typename Scalar>
Var<Scalar> operator*(Var<Scalar> a, Scalar s) { return scale(a, s); }
template <typename Scalar>
Var<Scalar> operator*(Scalar s, Var<Scalar> a) { return scale(a, s); }

template <typename Scalar>
Var<Scalar> tanh(Var<Scalar> a) {
  Matrix<Scalar> out = a.value().array().tanh();
  const auto ia = a.index();
  return a.tape().push(std::move(out), {a}, "tanh", [ia](Tape<Scalar>& t, std::size_t self) {
    const auto& y = t.value(self);
    t.accumulate(ia, t.grad(self).cwiseProduct((Scalar(1) - y.array().square()).matrix()));
  });
}

/// Tanh-approximated GELU.
template <typename Scalar>
Var<Scalar> gelu(Var<Scalar> a) {
  const Scalar c = Scalar(0.7978845608028654);  // sqrt(2/pi)
  const Scalar k = Scalar(0.044715);
  const auto& x = a.value();
  Matrix<Scalar> u = (c * (x.array() + k * x.array().cube())).tanh().matrix();
  Matrix<Scalar> out = (Scalar(0.5) * x.array() * (Scalar(1) + u.array())).matrix();
  const auto ia = a.index();
  return a.tape().push(std::move(out), {a}, "gelu", [ia, u = std::move(u), c, k](Tape<Scalar>& t, std::size_t self) {
    const auto x = t.value(ia).array();
    const auto du = (Scalar(1) - u.array().square()) * c * (Scalar(1) + Scalar(3) * k * x.square());
    const auto d = Scalar(0.5) * (Scalar(1) + u.array()) + Scalar(0.5) * x * du;
    t.accumulate(ia, (t.grad(self).array() * d).matrix());
  });
}

template <typename Scalar>
Var<Scalar> exp(Var<Scalar> a) {
  Matrix<Scalar> out = a.value().array().exp();
  const auto ia = a.index();
  return a.tape().push(std::move(out), {a}, "exp", [ia](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(ia, t.grad(self).cwiseProduct(t.value(self)));
  });
}

template <typename Scalar>
Var<Scalar> log(Var<Scalar> a) {
  Matrix<Scalar> out = a.value().array().log();
  const auto ia = a.index();
  return a.tape().push(std::move(out), {a}, "log", [ia](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(ia, t.grad(self).cwiseQuotient(t.value(ia)));
  });
}

/// log(1 - p), with the log floored at -100 the way common BCE kernels do.
template <typename Scalar>
Var<Scalar> log_complement(Var<Scalar> p) {
  const Scalar floor = Scalar(-100);
  Matrix<Scalar> out = (Scalar(1) - p.value().array()).log().max(floor).matrix();
  const auto ip = p.index();
  return p.tape().push(std::move(out), {p}, "log_complement", [ip, floor](Tape<Scalar>& t, std::size_t self) {
    const auto& y = t.value(self);
    const auto& x = t.value(ip);
    Matrix<Scalar> d(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      d.data()[i] = y.data()[i] > floor ? Scalar(-1) / (Scalar(1) - x.data()[i]) : Scalar(0);
    }
    t.accumulate(ip, t.grad(self).cwiseProduct(d));
  });
}

template <typename Scalar>
Var<Scalar> softmax_rows(Var<Scalar> a) {
  Matrix<Scalar> out = (a.value().colwise() - a.value().rowwise().maxCoeff()).array().exp().matrix();
  out.array().colwise() /= out.rowwise().sum().array();
  const auto ia = a.index();
  return a.tape().push(std::move(out), {a}, "softmax_rows", [ia](Tape<Scalar>& t, std::size_t self) {
    const auto& y = t.value(self);
    const auto& g = t.grad(self);
    Matrix<Scalar> dot = g.cwiseProduct(y).rowwise().sum();
    t.accumulate(ia, y.cwiseProduct((g.colwise() - dot.col(0))));
  });
}

template <typename Scalar>
Var<Scalar> log_softmax_rows(Var<Scalar> a) {
  const auto& x = a.value();
  Matrix<Scalar> shifted = x.colwise() - x.rowwise().maxCoeff();
  Matrix<Scalar> lse = shifted.array().exp().rowwise().sum().log().matrix();
  Matrix<Scalar> out = shifted.colwise() - lse.col(0);
  const auto ia = a.index();
  return a.tape().push(std::move(out), {a}, "log_softmax_rows", [ia](Tape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad(self);
    Matrix<Scalar> p = t.value(self).array().exp().matrix();
    Matrix<Scalar> gs = g.rowwise().sum();
    t.accumulate(ia, g - Matrix<Scalar>(p.array().colwise() * gs.col(0).array()));
  });
}

/// Row-wise layer normalization with affine 1xn gain and bias.
template <typename Scalar>
Var<Scalar> layer_norm_rows(Var<Scalar> x, Var<Scalar> gain, Var<Scalar> bias, Scalar eps = Scalar(1e-5)) {
  detail::require_same_tape(x, gain, "layer_norm_rows");
  if (gain.rows() != 1 || gain.cols() != x.cols()) detail::shape_fail("layer_norm_rows", x.value(), gain.value());
  if (bias.rows() != 1 || bias.cols() != x.cols()) detail::shape_fail("layer_norm_rows", x.value(), bias.value());
  const auto n = static_cast<Scalar>(x.cols());
  const auto& xv = x.value();
  Matrix<Scalar> mean = xv.rowwise().sum() / n;
  Matrix<Scalar> centered = xv.colwise() - mean.col(0);
  Matrix<Scalar> inv_std = ((centered.array().square().rowwise().sum() / n) + eps).rsqrt().matrix();
  Matrix<Scalar> xhat = centered.array().colwise() * inv_std.col(0).array();
  Matrix<Scalar> out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  const auto ix = x.index(), ig = gain.index(), ib = bias.index();
  return x.tape().push(
      std::move(out), {x, gain, bias}, "layer_norm_rows",
      [ix, ig, ib, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<Scalar>& t, std::size_t self) {
        const auto& g = t.grad(self);
        t.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
        t.accumulate(ib, g.colwise().sum());
        if (!t.requires_grad(ix)) return;
        Matrix<Scalar> gx = g.array().rowwise() * t.value(ig).row(0).array();
        Matrix<Scalar> m1 = gx.rowwise().sum() / n;
        Matrix<Scalar> m2 = gx.cwiseProduct(xhat).rowwise().sum() / n;
        Matrix<Scalar> dx = (gx.colwise() - m1.col(0)) - Matrix<Scalar>(xhat.array().colwise() * m2.col(0).array());
        t.accumulate(ix, Matrix<Scalar>(dx.array().colwise() * inv_std.col(0).array()));
      });
}

/// Selects rows of a by index; repeated indices accumulate on backward.
template <typename Scalar>
Var<Scalar> gather_rows(Var<Scalar> a, std::vector<Eigen::Index> rows) {
  Matrix<Scalar> out(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) {
      throw ShapeError("gather_rows: row " + std::to_string(rows[i]) + " out of range for " + detail::dims(a.value()));
    }
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(rows[i]);
  }
  const auto ia = a.index();
  return a.tape().push(std::move(out), {a}, "gather_rows", [ia, rows = std::move(rows)](Tape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(ia);
    for (std::size_t i = 0; i < rows.size(); ++i) ga.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

/// Embedding lookup: rows of a table selected by id.
template <typename Scalar>
Var<Scalar> embedding(Var<Scalar> table, std::vector<Eigen::Index> ids) {
  return gather_rows(table, std::move(ids));
}

/// Picks one column per row: out(i) = a(i, cols[i]), an n x 1 result.
template <typename Scalar>
Var<Scalar> pick_cols(Var<Scalar> a, std::vector<Eigen::Index> cols) {
  if (static_cast<Eigen::Index>(cols.size()) != a.rows()) {
    throw ShapeError("pick_cols: " + std::to_string(cols.size()) + " indices for " + detail::dims(a.value()));
  }
  Matrix<Scalar> out(a.rows(), 1);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    if (cols[i] < 0 || cols[i] >= a.cols()) throw ShapeError("pick_cols: column out of range");
    out(i, 0) = a.value()(i, cols[i]);
  }
  const auto ia = a.index();
  return a.tape().push(std::move(out), {a}, "pick_cols", [ia, cols = std::move(cols)](Tape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(ia);
    for (Eigen::Index i = 0; i < g.rows(); ++i) ga(i, cols[i]) += g(i, 0);
  });
}

template <typename Scalar>
Var<Scalar> slice_cols(Var<Scalar> a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.cols()) {
    throw ShapeError("slice_cols: [" + std::to_string(begin) + "," + std::to_string(begin + count) + ") of " +
                     detail::dims(a.value()));
  }
  Matrix<Scalar> out = a.value().middleCols(begin, count);
  const auto ia = a.index();
  return a.tape().push(std::move(out), {a}, "slice_cols", [ia, begin, count](Tape<Scalar>& t, std::size_t self) {
    t.grad(ia).middleCols(begin, count) += t.grad(self);
  });
}

template <typename Scalar>
Var<Scalar> concat_rows(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != parts.front().cols()) detail::shape_fail("concat_rows", parts.front().value(), p.value());
    rows += p.rows();
  }
  Matrix<Scalar> out(rows, parts.front().cols());
  std::vector<std::size_t> ids;
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
    ids.push_back(p.index());
  }
  return parts.front().tape().push_span(std::move(out), parts, "concat_rows",
                                        [ids = std::move(ids)](Tape<Scalar>& t, std::size_t self) {
                                          Eigen::Index off = 0;
                                          for (auto i : ids) {
                                            const auto n = t.value(i).rows();
                                            if (t.requires_grad(i)) t.accumulate(i, t.grad(self).middleRows(off, n));
                                            off += n;
                                          }
                                        });
}

template <typename Scalar>
Var<Scalar> concat_cols(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != parts.front().rows()) detail::shape_fail("concat_cols", parts.front().value(), p.value());
    cols += p.cols();
  }
  Matrix<Scalar> out(parts.front().rows(), cols);
  std::vector<std::size_t> ids;
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
    ids.push_back(p.index());
  }
  return parts.front().tape().push_span(std::move(out), parts, "concat_cols",
                                        [ids = std::move(ids)](Tape<Scalar>& t, std::size_t self) {
                                          Eigen::Index off = 0;
                                          for (auto i : ids) {
                                            const auto n = t.value(i).cols();
                                            if (t.requires_grad(i)) t.accumulate(i, t.grad(self).middleCols(off, n));
                                            off += n;
                                          }
                                        });
}

/// Replaces entries where mask is nonzero by a constant; those entries pass
/// no gradient.
template <typename Scalar>
Var<Scalar> masked_fill(Var<Scalar> a, const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& mask,
                        Scalar fill) {
  if (mask.rows() != a.rows() || mask.cols() != a.cols()) {
    throw ShapeError("masked_fill: mask (" + std::to_string(mask.rows()) + "," + std::to_string(mask.cols()) +
                     ") vs value " + detail::dims(a.value()));
  }
  Matrix<Scalar> out = a.value();
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (mask.data()[i]) out.data()[i] = fill;
  }
  const auto ia = a.index();
  return a.tape().push(std::move(out), {a}, "masked_fill", [ia, mask](Tape<Scalar>& t, std::size_t self) {
    Matrix<Scalar> g = t.grad(self);
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      if (mask.data()[i]) g.data()[i] = Scalar(0);
    }
    t.accumulate(ia, g);
  });
}

/// Elementwise clamp to [lo, hi]; zero gradient outside the interval.
template <typename Scalar>
Var<Scalar> clamp(Var<Scalar> a, Scalar lo, Scalar hi) {
  Matrix<Scalar> out = a.value().cwiseMax(lo).cwiseMin(hi);
  const auto ia = a.index();
  return a.tape().push(std::move(out), {a}, "clamp", [ia, lo, hi](Tape<Scalar>& t, std::size_t self) {
    const auto& x = t.value(ia);
    Matrix<Scalar> g = t.grad(self);
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      if (x.data()[i] < lo || x.data()[i] > hi) g.data()[i] = Scalar(0);
    }
    t.accumulate(ia, g);
  });
}

/// Elementwise minimum; ties route the gradient to the left operand.
template <typename Scalar>
Var<Scalar> minimum(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_tape(a, b, "minimum");
  if (a.rows() != b.rows() || a.cols() != b.cols()) detail::shape_fail("minimum", a.value(), b.value());
  Matrix<Scalar> out = a.value().cwiseMin(b.value());
  const auto ia = a.index(), ib = b.index();
  return a.tape().push(std::move(out), {a, b}, "minimum", [ia, ib](Tape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& av = t.value(ia);
    const auto& bv = t.value(ib);
    Matrix<Scalar> ga = Matrix<Scalar>::Zero(g.rows(), g.cols());
    Matrix<Scalar> gb = Matrix<Scalar>::Zero(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      (av.data()[i] <= bv.data()[i] ? ga : gb).data()[i] = g.data()[i];
    }
    t.accumulate(ia, ga);
    t.accumulate(ib, gb);
  });
}

template <typename Scalar>
Var<Scalar> sum(Var<Scalar> a) {
  Matrix<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  const auto ia = a.index();
  return a.tape().push(std::move(out), {a}, "sum", [ia](Tape<Scalar>& t, std::size_t self) {
    const Scalar g = t.grad(self)(0, 0);
    t.grad(ia).array() += g;
  });
}

template <typename Scalar>
Var<Scalar> mean(Var<Scalar> a) {
  if (a.value().size() == 0) throw ShapeError("mean: empty operand");
  return scale(sum(a), Scalar(1) / static_cast<Scalar>(a.value().size()));
}

/// Row sums as an n x 1 column.
template <typename Scalar>
Var<Scalar> sum_rows(Var<Scalar> a) {
  Matrix<Scalar> out = a.value().rowwise().sum();
  const auto ia = a.index();
  return a.tape().push(std::move(out), {a}, "sum_rows", [ia](Tape<Scalar>& t, std::size_t self) {
    auto& ga = t.grad(ia);
    ga.colwise() += t.grad(self).col(0);
  });
}

}  // namespace geox
