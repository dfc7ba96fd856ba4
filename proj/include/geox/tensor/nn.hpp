#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "geox/tensor/ops.hpp"

namespace geox::nn {

template <typename Scalar>
using Handle = typename ParameterStore<Scalar>::Handle;

template <typename Scalar>
Tensor<Scalar> normal_tensor(Shape shape, double stddev, std::mt19937_64& rng) {
  Tensor<Scalar> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (std::size_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<Scalar>(dist(rng));
  return t;
}

template <typename Scalar>
Tensor<Scalar> filled_tensor(Shape shape, Scalar v) {
  Tensor<Scalar> t(std::move(shape));
  t.matrix().setConstant(v);
  return t;
}

/// y = x W + b with W stored (in, out).
template <typename Scalar>
struct Linear {
  Handle<Scalar> weight = 0;
  Handle<Scalar> bias = 0;

  static Linear create(ParameterStore<Scalar>& store, const std::string& name, std::size_t in, std::size_t out,
                       std::mt19937_64& rng, double gain = 1.0) {
    Linear l;
    l.weight = store.add(name + ".weight", normal_tensor<Scalar>({in, out}, gain / std::sqrt(double(in)), rng));
    l.bias = store.add(name + ".bias", Tensor<Scalar>(Shape{1, out}));
    return l;
  }

  static Linear bind(const ParameterStore<Scalar>& store, const std::string& name) {
    return Linear{lookup(store, name + ".weight"), lookup(store, name + ".bias")};
  }

  Var<Scalar> operator()(Tape<Scalar>& tape, ParameterStore<Scalar>& store, Var<Scalar> x) const {
    return add(matmul(x, tape.parameter(store, weight)), tape.parameter(store, bias));
  }

  static Handle<Scalar> lookup(const ParameterStore<Scalar>& store, const std::string& name) {
    auto h = store.find(name);
    if (!h) throw std::invalid_argument("missing parameter '" + name + "'");
    return *h;
  }
};

template <typename Scalar>
struct LayerNorm {
  Handle<Scalar> gain = 0;
  Handle<Scalar> bias = 0;

  static LayerNorm create(ParameterStore<Scalar>& store, const std::string& name, std::size_t dim) {
    LayerNorm l;
    l.gain = store.add(name + ".gain", filled_tensor<Scalar>({1, dim}, Scalar(1)));
    l.bias = store.add(name + ".bias", Tensor<Scalar>(Shape{1, dim}));
    return l;
  }

  static LayerNorm bind(const ParameterStore<Scalar>& store, const std::string& name) {
    return LayerNorm{Linear<Scalar>::lookup(store, name + ".gain"), Linear<Scalar>::lookup(store, name + ".bias")};
  }

  Var<Scalar> operator()(Tape<Scalar>& tape, ParameterStore<Scalar>& store, Var<Scalar> x) const {
    return layer_norm_rows(x, tape.parameter(store, gain), tape.parameter(store, bias));
  }
};

/// Stack of linear layers with tanh after every hidden layer.
template <typename Scalar>
struct TanhMlp {
  std::vector<Linear<Scalar>> layers;

  static TanhMlp create(ParameterStore<Scalar>& store, const std::string& name, std::vector<std::size_t> widths,
                        std::mt19937_64& rng, double output_gain = 1.0) {
    TanhMlp m;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      const bool last = i + 2 == widths.size();
      m.layers.push_back(Linear<Scalar>::create(store, name + "." + std::to_string(i), widths[i], widths[i + 1], rng,
                                                last ? output_gain : 1.0));
    }
    return m;
  }

  static TanhMlp bind(const ParameterStore<Scalar>& store, const std::string& name, std::size_t layer_count) {
    TanhMlp m;
    for (std::size_t i = 0; i < layer_count; ++i) m.layers.push_back(Linear<Scalar>::bind(store, name + "." + std::to_string(i)));
    return m;
  }

  Var<Scalar> operator()(Tape<Scalar>& tape, ParameterStore<Scalar>& store, Var<Scalar> x) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      x = layers[i](tape, store, x);
      if (i + 1 < layers.size()) x = geox::tanh(x);
    }
    return x;
  }
};

}  // namespace geox::nn
