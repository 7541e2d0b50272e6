#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rfenet/ops.hpp"

namespace rfenet {

struct LossConfig {
  double lambda_s = 0.01;
  double lambda_b = 0.25;
  double dice_smooth = 1.0;

  void validate() const {
    if (lambda_s < 0 || lambda_b < 0) throw ConfigError("loss lambdas must be >= 0");
    if (!(dice_smooth > 0)) throw ConfigError("dice smoothing must be > 0");
  }
};

/// Loss terms of one batch. Stage vectors are parallel to `stages`
/// (the cascade order, e.g. 4, 3, 2, 1).
struct LossReport {
  double total = 0;
  double s_out = 0;
  std::vector<int> stages;
  std::vector<double> s_stage;
  std::vector<double> b_stage;
  double lambda_s = 0;
  double lambda_b = 0;

  double recombined() const {
    double s = 0, b = 0;
    for (double v : s_stage) s += v;
    for (double v : b_stage) b += v;
    return s_out + lambda_s * s + lambda_b * b;
  }
};

// ---------------------------------------------------------------------------
// Value-level losses.

/// Mean over pixels of −ln softmax(logits)[target]; logits are n × pixels.
template <typename S>
double cross_entropy(const Mat<S>& logits, const std::vector<int>& target) {
  if (Index(target.size()) != logits.cols()) throw ShapeError("cross_entropy: size mismatch");
  double acc = 0;
  for (Index j = 0; j < logits.cols(); ++j) {
    const int t = target[j];
    if (t < 0 || t >= logits.rows()) {
      throw DataError("cross_entropy: class id " + std::to_string(t) + " out of range");
    }
    const double m = double(logits.col(j).maxCoeff());
    double z = 0;
    for (Index c = 0; c < logits.rows(); ++c) z += std::exp(double(logits(c, j)) - m);
    acc += m + std::log(z) - double(logits(t, j));
  }
  return acc / double(logits.cols());
}

/// 1 − (2·Σ p·t + ε) / (Σ p² + Σ t² + ε).
template <typename S>
double dice_loss(const Mat<S>& pred, const Mat<S>& target, double eps) {
  if (pred.size() != target.size()) throw ShapeError("dice_loss: size mismatch");
  const double inter = (pred.array() * target.array()).template cast<double>().sum();
  const double denom = pred.array().square().template cast<double>().sum() +
                       target.array().square().template cast<double>().sum();
  return 1.0 - (2.0 * inter + eps) / (denom + eps);
}

// ---------------------------------------------------------------------------
// Differentiable losses.

namespace ops {

/// Cross-entropy averaged over every column of an n × (batch·pixels) logit map.
template <typename S>
Var<S> cross_entropy(Var<S> logits, const std::vector<int>& target) {
  const Mat<S>& x = logits.data();
  if (Index(target.size()) != x.cols()) throw ShapeError("cross_entropy: size mismatch");
  for (int t : target) {
    if (t < 0 || t >= x.rows()) {
      throw DataError("cross_entropy: class id " + std::to_string(t) + " out of range");
    }
  }
  Graph<S>* g = logits.graph;
  Mat<S> v(1, 1);
  v(0, 0) = S(rfenet::cross_entropy(x, target));
  return g->emit(Tensor<S>(std::move(v), 1, 1, 1), {logits},
                 [g, il = logits.id, target](const Mat<S>& go) {
                   if (!g->requires_grad(il)) return;
                   Mat<S> d = channel_softmax(g->value(il).data);
                   for (Index j = 0; j < d.cols(); ++j) d(target[j], j) -= S(1);
                   g->grad(il) += d * (go(0, 0) / S(d.cols()));
                 });
}

/// Dice loss on sigmoid(logits), computed per sample and averaged.
template <typename S>
Var<S> dice_loss_with_logits(Var<S> logits, const Mat<S>& target, S eps) {
  if (logits.channels() != 1 || target.size() != logits.data().size()) {
    throw ShapeError("dice_loss: expects a single-channel map matching the target");
  }
  Graph<S>* g = logits.graph;
  const int n = logits.n();
  const Index P = logits.value().plane();
  Mat<S> p = sigmoid_values(logits.data());
  double acc = 0;
  for (int b = 0; b < n; ++b) {
    acc += dice_loss<S>(p.middleCols(b * P, P), target.middleCols(b * P, P), double(eps));
  }
  Mat<S> v(1, 1);
  v(0, 0) = S(acc / n);
  return g->emit(Tensor<S>(std::move(v), 1, 1, 1), {logits},
                 [g, il = logits.id, p, target, eps, n, P](const Mat<S>& go) {
                   if (!g->requires_grad(il)) return;
                   Mat<S> d(1, p.cols());
                   for (int b = 0; b < n; ++b) {
                     auto pb = p.middleCols(b * P, P).array();
                     auto tb = target.middleCols(b * P, P).array();
                     const S inter = (pb * tb).sum();
                     const S denom = pb.square().sum() + tb.square().sum() + eps;
                     const S num = S(2) * inter + eps;
                     // d/dp [1 − num/denom]
                     d.middleCols(b * P, P).array() =
                         -(S(2) * tb * denom - num * S(2) * pb) / (denom * denom) * pb *
                         (S(1) - pb);
                   }
                   g->grad(il) += d * (go(0, 0) / S(n));
                 });
}

}  // namespace ops

// ---------------------------------------------------------------------------
// Ground-truth resampling to stage resolution.

/// Nearest-neighbour label downsampling: pixel (y, x) takes source
/// (⌊y·H/h⌋, ⌊x·W/w⌋).
inline std::vector<int> downsample_labels(const std::vector<int>& mask, int H, int W, int h,
                                          int w) {
  std::vector<int> out(std::size_t(h) * w);
  for (int y = 0; y < h; ++y) {
    const int sy = int(std::int64_t(y) * H / h);
    for (int x = 0; x < w; ++x) out[y * w + x] = mask[sy * W + int(std::int64_t(x) * W / w)];
  }
  return out;
}

/// Max-pool downsampling of a binary map over the source block of each pixel.
template <typename S>
std::vector<S> downsample_boundary(const std::vector<std::uint8_t>& boundary, int H, int W,
                                   int h, int w) {
  std::vector<S> out(std::size_t(h) * w, S(0));
  for (int y = 0; y < h; ++y) {
    const int y0 = int(std::int64_t(y) * H / h), y1 = int(std::int64_t(y + 1) * H / h);
    for (int x = 0; x < w; ++x) {
      const int x0 = int(std::int64_t(x) * W / w), x1 = int(std::int64_t(x + 1) * W / w);
      std::uint8_t m = 0;
      for (int yy = y0; yy < std::max(y1, y0 + 1); ++yy)
        for (int xx = x0; xx < std::max(x1, x0 + 1); ++xx) m = std::max(m, boundary[yy * W + xx]);
      out[y * w + x] = m ? S(1) : S(0);
    }
  }
  return out;
}


/// Result of the joint objective: the differentiable total plus its terms.
template <typename S>
struct JointLoss {
  Var<S> total;
  LossReport report;
};

/// L = L_s_out + λ_s·Σ_i L_s_i + λ_b·Σ_i L_b_i.
///
/// `mask` and `boundary` hold the batch's full-resolution targets back to
/// back (n·H·W entries); they are resampled to each stage's resolution.
template <typename S>
JointLoss<S> joint_loss(Var<S> final_logits, const std::vector<Var<S>>& stage_semantic,
                        const std::vector<Var<S>>& stage_boundary,
                        const std::vector<int>& stage_ids, const std::vector<int>& mask,
                        const std::vector<std::uint8_t>& boundary, int H, int W,
                        const LossConfig& cfg) {
  cfg.validate();
  if (stage_semantic.size() != stage_boundary.size() ||
      stage_semantic.size() != stage_ids.size()) {
    throw ShapeError("joint_loss: stage list lengths differ");
  }
  const int n = final_logits.n();
  const std::size_t HW = std::size_t(H) * W;
  if (mask.size() != HW * n || boundary.size() != HW * n) {
    throw ShapeError("joint_loss: targets do not match the batch");
  }
  if (final_logits.h() != H || final_logits.w() != W) {
    throw ShapeError("joint_loss: final logits must be at input resolution");
  }

  JointLoss<S> out;
  LossReport& r = out.report;
  r.lambda_s = cfg.lambda_s;
  r.lambda_b = cfg.lambda_b;
  r.stages = stage_ids;

  std::vector<Var<S>> terms;
  std::vector<S> weights;
  Var<S> l_out = ops::cross_entropy(final_logits, mask);
  r.s_out = double(l_out.data()(0, 0));
  terms.push_back(l_out);
  weights.push_back(S(1));

  for (std::size_t i = 0; i < stage_semantic.size(); ++i) {
    const Var<S>& sem = stage_semantic[i];
    const Var<S>& bnd = stage_boundary[i];
    const int h = sem.h(), w = sem.w();
    std::vector<int> labels;
    Mat<S> edge(1, Index(n) * h * w);
    labels.reserve(std::size_t(n) * h * w);
    for (int b = 0; b < n; ++b) {
      std::vector<int> m(mask.begin() + b * HW, mask.begin() + (b + 1) * HW);
      std::vector<std::uint8_t> e(boundary.begin() + b * HW, boundary.begin() + (b + 1) * HW);
      auto ml = downsample_labels(m, H, W, h, w);
      labels.insert(labels.end(), ml.begin(), ml.end());
      auto el = downsample_boundary<S>(e, H, W, bnd.h(), bnd.w());
      for (std::size_t j = 0; j < el.size(); ++j) edge(0, b * Index(h) * w + Index(j)) = el[j];
    }
    Var<S> ls = ops::cross_entropy(sem, labels);
    Var<S> lb = ops::dice_loss_with_logits(bnd, edge, S(cfg.dice_smooth));
    r.s_stage.push_back(double(ls.data()(0, 0)));
    r.b_stage.push_back(double(lb.data()(0, 0)));
    terms.push_back(ls);
    weights.push_back(S(cfg.lambda_s));
    terms.push_back(lb);
    weights.push_back(S(cfg.lambda_b));
  }
  out.total = ops::weighted_sum(terms, weights);
  r.total = double(out.total.data()(0, 0));
  return out;
}

}  // namespace rfenet
