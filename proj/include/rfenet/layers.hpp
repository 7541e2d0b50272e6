#pragma once

#include <cmath>
#include <random>
#include <string>

#include "rfenet/ops.hpp"

namespace rfenet {

using Rng = std::mt19937_64;

enum class NormKind { group, batch };

/// Gaussian He initialization, drawn in double so that float and double
/// models built from the same seed hold the same (rounded) weights.
template <typename S>
Mat<S> he_normal(Index rows, Index cols, Index fan_in, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / double(fan_in)));
  Mat<S> m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = S(dist(rng));
  return m;
}

template <typename S>
Mat<S> scaled_normal(Index rows, Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Mat<S> m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = S(dist(rng));
  return m;
}

/// Number of normalization groups for a channel count (at most 4).
inline int default_groups(Index channels) {
  for (int g : {4, 2}) {
    if (channels % g == 0) return g;
  }
  return 1;
}

template <typename S>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterSet<S>& ps, const std::string& name, Index in_channels,
         Index out_channels, ConvGeometry geom, bool with_bias, Rng& rng)
      : geom_(geom), in_(in_channels), out_(out_channels) {
    const Index fan_in = in_channels * geom.kernel * geom.kernel;
    weight_ = &ps.add(name + ".weight", he_normal<S>(out_channels, fan_in, fan_in, rng));
    if (with_bias) bias_ = &ps.add(name + ".bias", Mat<S>::Zero(out_channels, 1));
  }

  Var<S> operator()(Var<S> x) const {
    Graph<S>& g = *x.graph;
    Var<S> b = bias_ ? g.param(*bias_) : Var<S>{};
    return ops::conv2d(x, g.param(*weight_), b, geom_);
  }

  Parameter<S>& weight() const { return *weight_; }
  Parameter<S>* bias() const { return bias_; }
  Index in_channels() const { return in_; }
  Index out_channels() const { return out_; }
  const ConvGeometry& geometry() const { return geom_; }

 private:
  Parameter<S>* weight_ = nullptr;
  Parameter<S>* bias_ = nullptr;
  ConvGeometry geom_;
  Index in_ = 0;
  Index out_ = 0;
};

template <typename S>
class Norm {
 public:
  Norm() = default;
  Norm(ParameterSet<S>& ps, const std::string& name, Index channels, NormKind kind)
      : kind_(kind), groups_(default_groups(channels)) {
    gamma_ = &ps.add(name + ".gamma", Mat<S>::Ones(channels, 1));
    beta_ = &ps.add(name + ".beta", Mat<S>::Zero(channels, 1));
    if (kind == NormKind::batch) {
      mean_ = &ps.add(name + ".running_mean", Mat<S>::Zero(channels, 1), false);
      var_ = &ps.add(name + ".running_var", Mat<S>::Ones(channels, 1), false);
    }
  }

  Var<S> operator()(Var<S> x) const {
    Graph<S>& g = *x.graph;
    if (kind_ == NormKind::batch) {
      return ops::batch_norm(x, g.param(*gamma_), g.param(*beta_), *mean_, *var_,
                             S(0.1), S(1e-5));
    }
    return ops::group_norm(x, g.param(*gamma_), g.param(*beta_), groups_, S(1e-5));
  }

 private:
  NormKind kind_ = NormKind::group;
  int groups_ = 1;
  Parameter<S>* gamma_ = nullptr;
  Parameter<S>* beta_ = nullptr;
  Parameter<S>* mean_ = nullptr;
  Parameter<S>* var_ = nullptr;
};

/// conv → norm → ReLU, the workhorse unit of encoder and heads.
template <typename S>
class ConvNormAct {
 public:
  ConvNormAct() = default;
  ConvNormAct(ParameterSet<S>& ps, const std::string& name, Index in_channels,
              Index out_channels, ConvGeometry geom, NormKind norm, Rng& rng)
      : conv_(ps, name + ".conv", in_channels, out_channels, geom, false, rng),
        norm_(ps, name + ".norm", out_channels, norm) {}

  Var<S> operator()(Var<S> x) const { return ops::relu(norm_(conv_(x))); }
  Index out_channels() const { return conv_.out_channels(); }

 private:
  Conv2d<S> conv_;
  Norm<S> norm_;
};

/// Per-point affine map for C × points tensors.
template <typename S>
class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet<S>& ps, const std::string& name, Index in_dim, Index out_dim,
         Rng& rng, bool with_bias = true)
      : out_(out_dim) {
    weight_ = &ps.add(name + ".weight",
                      scaled_normal<S>(out_dim, in_dim, std::sqrt(1.0 / double(in_dim)), rng));
    if (with_bias) bias_ = &ps.add(name + ".bias", Mat<S>::Zero(out_dim, 1));
  }

  Var<S> operator()(Var<S> x) const {
    Graph<S>& g = *x.graph;
    return ops::linear(x, g.param(*weight_), bias_ ? g.param(*bias_) : Var<S>{});
  }

  Parameter<S>& weight() const { return *weight_; }
  Parameter<S>* bias() const { return bias_; }
  Index out_dim() const { return out_; }

 private:
  Parameter<S>* weight_ = nullptr;
  Parameter<S>* bias_ = nullptr;
  Index out_ = 0;
};

}  // namespace rfenet
