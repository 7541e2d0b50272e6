#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "rfenet/layers.hpp"

namespace rfenet {

/// Point budget and attention shape. Negative K / M / d_k mean "derive from
/// the map": K = ⌈h·w/16⌉, M = min(64, h·w), d_k = C / heads.
struct SarConfig {
  int K = -1;
  int M = -1;
  int heads = 4;
  int d_k = -1;

  int resolve_k(Index pixels) const {
    return K >= 0 ? K : int((pixels + 15) / 16);
  }
  int resolve_m(Index pixels) const {
    return M >= 0 ? M : int(std::min<Index>(64, pixels));
  }
  int resolve_dk(Index channels) const {
    return d_k > 0 ? d_k : int(channels / heads);
  }

  void validate(Index channels) const {
    if (heads < 1) throw ConfigError("sar heads must be >= 1");
    if (resolve_dk(channels) < 1 || resolve_dk(channels) * heads > channels) {
      throw ConfigError("sar d_k * heads must not exceed the feature width");
    }
  }
};

/// Selected positions of one map, best first, with their scores and
/// (optionally) the gathered feature columns (C × count).
template <typename S>
struct PointSet {
  std::vector<Index> indices;
  std::vector<S> scores;
  Mat<S> features;

  std::size_t size() const { return indices.size(); }
};

/// Shannon entropy −Σ p ln p over the channel axis, with 0·ln 0 = 0.
template <typename S>
FeatureMap<S> pixel_entropy(const Tensor<S>& probs) {
  Mat<S> e = Mat<S>::Zero(1, probs.columns());
  for (Index j = 0; j < probs.columns(); ++j) {
    S acc = 0;
    for (Index c = 0; c < probs.channels(); ++c) {
      const S p = probs.data(c, j);
      if (p > S(0)) acc -= p * std::log(p);
    }
    e(0, j) = acc;
  }
  return Tensor<S>(std::move(e), probs.n, probs.h, probs.w);
}

/// Indices of the `count` largest scores, descending; ties go to the smaller
/// index.
template <typename S>
PointSet<S> select_top(const S* scores, Index size, Index count, const char* what) {
  if (count < 0 || count > size) {
    throw SelectionError(std::string(what) + ": requested " + std::to_string(count) +
                         " points from a map of " + std::to_string(size));
  }
  std::vector<Index> order(size);
  std::iota(order.begin(), order.end(), Index(0));
  std::partial_sort(order.begin(), order.begin() + count, order.end(),
                    [scores](Index a, Index b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  PointSet<S> out;
  out.indices.assign(order.begin(), order.begin() + count);
  for (Index i : out.indices) out.scores.push_back(scores[i]);
  return out;
}

/// The K pixels of largest entropy in a single-sample entropy map.
template <typename S>
PointSet<S> select_uncertain(const FeatureMap<S>& entropy, Index K) {
  return select_top<S>(entropy.data.data(), entropy.columns(), K, "select_uncertain");
}

/// The M pixels of largest boundary probability in a single-sample map.
template <typename S>
PointSet<S> select_confident_boundary(const FeatureMap<S>& boundary_prob, Index M) {
  return select_top<S>(boundary_prob.data.data(), boundary_prob.columns(), M,
                       "select_confident_boundary");
}

template <typename S>
void gather_features(const FeatureMap<S>& source, PointSet<S>& points) {
  points.features.resize(source.channels(), Index(points.indices.size()));
  for (std::size_t j = 0; j < points.indices.size(); ++j) {
    points.features.col(j) = source.data.col(points.indices[j]);
  }
}

/// Multi-head cross-attention with queries from uncertain semantic points
/// and keys = values from confident boundary points.
template <typename S>
class CrossAttention {
 public:
  CrossAttention() = default;
  CrossAttention(ParameterSet<S>& ps, const std::string& name, Index channels,
                 const SarConfig& cfg, Rng& rng)
      : heads_(cfg.heads) {
    cfg.validate(channels);
    const Index inner = Index(cfg.resolve_dk(channels)) * cfg.heads;
    q_ = Linear<S>(ps, name + ".q", channels, inner, rng);
    // A key bias shifts every score of a query equally, so softmax cancels it.
    k_ = Linear<S>(ps, name + ".k", channels, inner, rng, false);
    v_ = Linear<S>(ps, name + ".v", channels, inner, rng);
    out_ = Linear<S>(ps, name + ".out", inner, channels, rng);
  }

  /// queries: C × n·K, values: C × n·M (point layouts). Returns C × n·K.
  Var<S> operator()(Var<S> queries, Var<S> values,
                    std::vector<Mat<S>>* probs = nullptr) const {
    Var<S> attended = ops::attention(q_(queries), k_(values), v_(values), heads_, probs);
    return out_(attended);
  }

  int heads() const { return heads_; }
  const Linear<S>& q() const { return q_; }
  const Linear<S>& k() const { return k_; }
  const Linear<S>& v() const { return v_; }
  const Linear<S>& out() const { return out_; }

 private:
  int heads_ = 1;
  Linear<S> q_, k_, v_, out_;
};

/// Per-sample selections made by one SAR invocation.
struct SarTrace {
  std::vector<std::vector<Index>> uncertain;  // per sample, within-sample pixel indices
  std::vector<std::vector<Index>> boundary;
  bool refined = false;
};

/// Structurally attentive refinement: gather the K most uncertain semantic
/// points and M most confident boundary points per sample, refine the former
/// by cross-attention over the latter, and add the result back in place.
template <typename S>
class SarBlock {
 public:
  SarBlock() = default;
  SarBlock(ParameterSet<S>& ps, const std::string& name, Index channels,
           const SarConfig& cfg, Rng& rng)
      : cfg_(cfg),
        attend_(ps, name + ".attn", channels, cfg, rng),
        fuse_(ps, name + ".fuse", channels, channels, rng) {}

  /// semantic_logits / boundary_logits are the stage heads applied to f_s
  /// and f_b; they drive selection only (indices carry no gradient).
  Var<S> operator()(Var<S> f_s, Var<S> f_b, Var<S> semantic_logits, Var<S> boundary_logits,
                    SarTrace* trace = nullptr,
                    std::vector<Mat<S>>* probs = nullptr) const {
    if (!f_s.value().same_layout(f_b.value())) {
      throw ShapeError("sar: semantic and boundary features differ in spatial size");
    }
    const int n = f_s.n();
    const Index P = f_s.value().plane();
    const int k = cfg_.resolve_k(P);
    const int m = cfg_.resolve_m(P);
    if (k > P) throw SelectionError("sar: K exceeds the number of pixels");
    if (m > P) throw SelectionError("sar: M exceeds the number of pixels");
    if (trace) {
      trace->uncertain.assign(n, {});
      trace->boundary.assign(n, {});
      trace->refined = false;
    }
    if (k == 0 || m == 0) return f_s;

    const Mat<S> probs_s = channel_softmax(semantic_logits.data());
    const Mat<S> probs_b = sigmoid_values(boundary_logits.data());
    std::vector<Index> q_cols, v_cols;
    q_cols.reserve(std::size_t(n) * k);
    v_cols.reserve(std::size_t(n) * m);
    for (int b = 0; b < n; ++b) {
      Tensor<S> ps(probs_s.middleCols(b * P, P), 1, f_s.h(), f_s.w());
      Tensor<S> pb(probs_b.middleCols(b * P, P), 1, f_s.h(), f_s.w());
      auto uncertain = select_uncertain(pixel_entropy(ps), k);
      auto confident = select_confident_boundary(pb, m);
      for (Index i : uncertain.indices) q_cols.push_back(b * P + i);
      for (Index i : confident.indices) v_cols.push_back(b * P + i);
      if (trace) {
        trace->uncertain[b] = uncertain.indices;
        trace->boundary[b] = confident.indices;
      }
    }
    if (trace) trace->refined = true;
    Var<S> q = ops::gather_columns(f_s, q_cols, n, k);
    Var<S> v = ops::gather_columns(f_b, v_cols, n, m);
    Var<S> delta = fuse_(attend_(q, v, probs));
    return ops::scatter_add_columns(f_s, q_cols, delta);
  }

  const SarConfig& config() const { return cfg_; }
  const CrossAttention<S>& attention() const { return attend_; }
  const Linear<S>& fuse() const { return fuse_; }

 private:
  SarConfig cfg_;
  CrossAttention<S> attend_;
  Linear<S> fuse_;
};

}  // namespace rfenet
