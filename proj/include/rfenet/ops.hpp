#pragma once

#include <cmath>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "rfenet/autograd.hpp"

namespace rfenet::ops {

namespace detail {

template <typename S>
void accumulate(Graph<S>* g, int id, const auto& delta) {
  if (g->requires_grad(id)) g->grad(id) += delta;
}

template <typename S>
void require_same_layout(const Var<S>& a, const Var<S>& b, const char* op) {
  if (!a.value().same_layout(b.value())) {
    throw ShapeError(std::string(op) + ": spatial layout mismatch (" +
                     std::to_string(a.h()) + "x" + std::to_string(a.w()) +
                     " vs " + std::to_string(b.h()) + "x" +
                     std::to_string(b.w()) + ")");
  }
}

}  // namespace detail

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  detail::require_same_layout(a, b, "add");
  if (a.channels() != b.channels()) throw ShapeError("add: channel mismatch");
  Graph<S>* g = a.graph;
  Tensor<S> out(a.data() + b.data(), a.n(), a.h(), a.w());
  return g->emit(std::move(out), {a, b}, [g, ia = a.id, ib = b.id](const Mat<S>& go) {
    detail::accumulate(g, ia, go);
    detail::accumulate(g, ib, go);
  });
}

template <typename S>
Var<S> scale(Var<S> a, S factor) {
  Graph<S>* g = a.graph;
  Tensor<S> out(a.data() * factor, a.n(), a.h(), a.w());
  return g->emit(std::move(out), {a}, [g, ia = a.id, factor](const Mat<S>& go) {
    detail::accumulate(g, ia, go * factor);
  });
}

template <typename S>
Var<S> relu(Var<S> a) {
  Graph<S>* g = a.graph;
  Tensor<S> out(a.data().cwiseMax(S(0)), a.n(), a.h(), a.w());
  return g->emit(std::move(out), {a}, [g, ia = a.id](const Mat<S>& go) {
    const Mat<S>& x = g->value(ia).data;
    detail::accumulate(g, ia, (x.array() > S(0)).select(go, S(0)));
  });
}

template <typename S>
Var<S> sigmoid(Var<S> a) {
  Graph<S>* g = a.graph;
  const int self = int(g->size());
  Tensor<S> out(sigmoid_values(a.data()), a.n(), a.h(), a.w());
  return g->emit(std::move(out), {a}, [g, ia = a.id, self](const Mat<S>& go) {
    const Mat<S>& s = g->value(self).data;
    detail::accumulate(g, ia, (go.array() * s.array() * (S(1) - s.array())).matrix());
  });
}

/// Value copy that blocks gradient flow into a.
template <typename S>
Var<S> stop_gradient(Var<S> a) {
  return a.graph->input(a.value());
}

// ---------------------------------------------------------------------------
// Convolution and linear maps.

/// 2-D convolution with "same" padding. weight is Cout × (Cin·k·k) laid out
/// as (cin, ky, kx); bias is Cout × 1 or invalid for bias-free convs.
template <typename S>
Var<S> conv2d(Var<S> x, Var<S> weight, Var<S> bias, ConvGeometry geom) {
  Graph<S>* g = x.graph;
  const Index cin = x.channels();
  const Index kk = Index(geom.kernel) * geom.kernel;
  if (weight.data().cols() != cin * kk) {
    throw ShapeError("conv2d: weight expects " +
                     std::to_string(weight.data().cols() / kk) +
                     " input channels, got " + std::to_string(cin));
  }
  const int ho = geom.out_size(x.h()), wo = geom.out_size(x.w());
  const bool pointwise = geom.kernel == 1 && geom.stride == 1;
  auto cols = std::make_shared<Mat<S>>();
  if (!pointwise) im2col(x.value(), geom, *cols);
  const Mat<S>& lowered = pointwise ? x.data() : *cols;

  Mat<S> y(weight.data().rows(), lowered.cols());
  y.noalias() = weight.data() * lowered;
  if (bias.valid()) y.colwise() += bias.data().col(0);
  Tensor<S> out(std::move(y), x.n(), ho, wo);

  std::vector<Var<S>> parents{x, weight};
  if (bias.valid()) parents.push_back(bias);
  if (!g->grad_enabled()) cols.reset();
  return g->emit(std::move(out), parents,
                 [g, ix = x.id, iw = weight.id, ib = bias.id, geom, pointwise,
                  cols](const Mat<S>& go) {
                   const Mat<S>& in = pointwise ? g->value(ix).data : *cols;
                   if (g->requires_grad(iw)) g->grad(iw).noalias() += go * in.transpose();
                   if (ib >= 0 && g->requires_grad(ib)) {
                     g->grad(ib) += go.rowwise().sum();
                   }
                   if (g->requires_grad(ix)) {
                     const Mat<S>& wmat = g->value(iw).data;
                     if (pointwise) {
                       g->grad(ix).noalias() += wmat.transpose() * go;
                     } else {
                       Mat<S> dcols(wmat.cols(), go.cols());
                       dcols.noalias() = wmat.transpose() * go;
                       const Tensor<S>& xv = g->value(ix);
                       Tensor<S> dx(Mat<S>::Zero(xv.channels(), xv.columns()),
                                    xv.n, xv.h, xv.w);
                       col2im_add(dcols, geom, dx);
                       g->grad(ix) += dx.data;
                     }
                   }
                 });
}

/// Per-column affine map W·x + b; used for point features and 1×1 convs.
template <typename S>
Var<S> linear(Var<S> x, Var<S> weight, Var<S> bias) {
  return conv2d(x, weight, bias, ConvGeometry{1, 1, 1});
}

// ---------------------------------------------------------------------------
// Normalization.

/// Group normalization over (channels in group) × (h·w) per sample.
template <typename S>
Var<S> group_norm(Var<S> x, Var<S> gamma, Var<S> beta, int groups, S eps) {
  Graph<S>* g = x.graph;
  const Tensor<S>& xv = x.value();
  const Index C = xv.channels();
  if (groups < 1 || C % groups != 0) {
    throw ShapeError("group_norm: " + std::to_string(C) +
                     " channels not divisible into " + std::to_string(groups) +
                     " groups");
  }
  const Index cg = C / groups;
  const Index P = xv.plane();
  const S count = S(cg * P);
  auto xhat = std::make_shared<Mat<S>>(C, xv.columns());
  auto inv_std = std::make_shared<Mat<S>>(groups, xv.n);
  for (int b = 0; b < xv.n; ++b) {
    for (int gi = 0; gi < groups; ++gi) {
      auto blk = xv.data.block(gi * cg, b * P, cg, P);
      const S mean = blk.sum() / count;
      const S var = (blk.array() - mean).square().sum() / count;
      const S inv = S(1) / std::sqrt(var + eps);
      (*inv_std)(gi, b) = inv;
      xhat->block(gi * cg, b * P, cg, P) = (blk.array() - mean) * inv;
    }
  }
  Mat<S> y = (xhat->array().colwise() * gamma.data().col(0).array()).matrix();
  y.colwise() += beta.data().col(0);
  Tensor<S> out(std::move(y), xv.n, xv.h, xv.w);
  return g->emit(
      std::move(out), {x, gamma, beta},
      [g, ix = x.id, igam = gamma.id, ibet = beta.id, xhat, inv_std, groups,
       cg, P, count](const Mat<S>& go) {
        if (g->requires_grad(igam)) {
          g->grad(igam) += (go.array() * xhat->array()).rowwise().sum().matrix();
        }
        if (g->requires_grad(ibet)) g->grad(ibet) += go.rowwise().sum();
        if (!g->requires_grad(ix)) return;
        const Mat<S>& gam = g->value(igam).data;
        Mat<S> dxhat = (go.array().colwise() * gam.col(0).array()).matrix();
        Mat<S>& dx = g->grad(ix);
        const int n = int(inv_std->cols());
        for (int b = 0; b < n; ++b) {
          for (int gi = 0; gi < groups; ++gi) {
            auto dh = dxhat.block(gi * cg, b * P, cg, P);
            auto xh = xhat->block(gi * cg, b * P, cg, P);
            const S m1 = dh.sum() / count;
            const S m2 = (dh.array() * xh.array()).sum() / count;
            dx.block(gi * cg, b * P, cg, P).array() +=
                (*inv_std)(gi, b) * (dh.array() - m1 - xh.array() * m2);
          }
        }
      });
}

/// Batch normalization over all columns. In training graphs the running
/// statistics buffers are updated in place.
template <typename S>
Var<S> batch_norm(Var<S> x, Var<S> gamma, Var<S> beta, Parameter<S>& running_mean,
                  Parameter<S>& running_var, S momentum, S eps) {
  Graph<S>* g = x.graph;
  const Tensor<S>& xv = x.value();
  const Index C = xv.channels();
  const S count = S(xv.columns());
  Vec<S> mean(C), inv(C);
  const bool batch_stats = g->training();
  for (Index c = 0; c < C; ++c) {
    if (batch_stats) {
      const S m = xv.data.row(c).sum() / count;
      const S v = (xv.data.row(c).array() - m).square().sum() / count;
      mean(c) = m;
      inv(c) = S(1) / std::sqrt(v + eps);
      running_mean.value(c, 0) = (S(1) - momentum) * running_mean.value(c, 0) + momentum * m;
      running_var.value(c, 0) = (S(1) - momentum) * running_var.value(c, 0) + momentum * v;
    } else {
      mean(c) = running_mean.value(c, 0);
      inv(c) = S(1) / std::sqrt(running_var.value(c, 0) + eps);
    }
  }
  auto xhat = std::make_shared<Mat<S>>(
      ((xv.data.colwise() - mean).array().colwise() * inv.array()).matrix());
  Mat<S> y = (xhat->array().colwise() * gamma.data().col(0).array()).matrix();
  y.colwise() += beta.data().col(0);
  Tensor<S> out(std::move(y), xv.n, xv.h, xv.w);
  return g->emit(
      std::move(out), {x, gamma, beta},
      [g, ix = x.id, igam = gamma.id, ibet = beta.id, xhat, inv, count,
       batch_stats](const Mat<S>& go) {
        if (g->requires_grad(igam)) {
          g->grad(igam) += (go.array() * xhat->array()).rowwise().sum().matrix();
        }
        if (g->requires_grad(ibet)) g->grad(ibet) += go.rowwise().sum();
        if (!g->requires_grad(ix)) return;
        const Mat<S>& gam = g->value(igam).data;
        Mat<S> dxhat = (go.array().colwise() * gam.col(0).array()).matrix();
        if (!batch_stats) {
          g->grad(ix) += (dxhat.array().colwise() * inv.array()).matrix();
          return;
        }
        Vec<S> m1 = dxhat.rowwise().sum() / count;
        Vec<S> m2 = (dxhat.array() * xhat->array()).rowwise().sum().matrix() / count;
        Mat<S> dx = dxhat;
        dx.colwise() -= m1;
        dx -= (xhat->array().colwise() * m2.array()).matrix();
        g->grad(ix) += (dx.array().colwise() * inv.array()).matrix();
      });
}

// ---------------------------------------------------------------------------
// Channel plumbing.

template <typename S>
Var<S> concat_channels(const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  Graph<S>* g = parts.front().graph;
  Index rows = 0;
  for (const auto& p : parts) {
    detail::require_same_layout(parts.front(), p, "concat_channels");
    rows += p.channels();
  }
  const Tensor<S>& f = parts.front().value();
  Mat<S> y(rows, f.columns());
  std::vector<std::pair<int, Index>> spans;
  Index r = 0;
  for (const auto& p : parts) {
    y.middleRows(r, p.channels()) = p.data();
    spans.emplace_back(p.id, r);
    r += p.channels();
  }
  Tensor<S> out(std::move(y), f.n, f.h, f.w);
  return g->emit(std::move(out), parts, [g, spans](const Mat<S>& go) {
    for (const auto& [id, row] : spans) {
      if (g->requires_grad(id)) {
        g->grad(id) += go.middleRows(row, g->value(id).channels());
      }
    }
  });
}

template <typename S>
Var<S> slice_channels(Var<S> x, Index start, Index count) {
  if (start < 0 || start + count > x.channels()) {
    throw ShapeError("slice_channels: range out of bounds");
  }
  Graph<S>* g = x.graph;
  Tensor<S> out(x.data().middleRows(start, count), x.n(), x.h(), x.w());
  return g->emit(std::move(out), {x}, [g, ix = x.id, start, count](const Mat<S>& go) {
    if (g->requires_grad(ix)) g->grad(ix).middleRows(start, count) += go;
  });
}

/// Multiplies every channel of x by the single-channel map a (x ⊙ a).
template <typename S>
Var<S> gate(Var<S> x, Var<S> a) {
  detail::require_same_layout(x, a, "gate");
  if (a.channels() != 1) throw ShapeError("gate: attention must have one channel");
  Graph<S>* g = x.graph;
  Tensor<S> out((x.data().array().rowwise() * a.data().row(0).array()).matrix(),
                x.n(), x.h(), x.w());
  return g->emit(std::move(out), {x, a}, [g, ix = x.id, ia = a.id](const Mat<S>& go) {
    if (g->requires_grad(ix)) {
      g->grad(ix) += (go.array().rowwise() * g->value(ia).data.row(0).array()).matrix();
    }
    if (g->requires_grad(ia)) {
      g->grad(ia) += (go.array() * g->value(ix).data.array()).colwise().sum().matrix();
    }
  });
}

template <typename S>
Var<S> resize(Var<S> x, int out_h, int out_w) {
  if (out_h == x.h() && out_w == x.w()) return x;
  Graph<S>* g = x.graph;
  Tensor<S> out = bilinear_resize(x.value(), out_h, out_w);
  return g->emit(std::move(out), {x}, [g, ix = x.id, out_h, out_w](const Mat<S>& go) {
    if (!g->requires_grad(ix)) return;
    const Tensor<S>& xv = g->value(ix);
    Tensor<S> dy(go, xv.n, out_h, out_w);
    Tensor<S> dx(Mat<S>::Zero(xv.channels(), xv.columns()), xv.n, xv.h, xv.w);
    bilinear_resize_adjoint_add(dy, dx);
    g->grad(ix) += dx.data;
  });
}

/// Spatial mean per sample: C × n·h·w → C × n (h = w = 1).
template <typename S>
Var<S> global_avg_pool(Var<S> x) {
  Graph<S>* g = x.graph;
  const Tensor<S>& xv = x.value();
  const Index P = xv.plane();
  Mat<S> y(xv.channels(), xv.n);
  for (int b = 0; b < xv.n; ++b) {
    y.col(b) = xv.data.middleCols(b * P, P).rowwise().sum() / S(P);
  }
  Tensor<S> out(std::move(y), xv.n, 1, 1);
  return g->emit(std::move(out), {x}, [g, ix = x.id, P](const Mat<S>& go) {
    if (!g->requires_grad(ix)) return;
    Mat<S>& dx = g->grad(ix);
    for (Index b = 0; b < go.cols(); ++b) {
      dx.middleCols(b * P, P).colwise() += go.col(b) / S(P);
    }
  });
}

/// Replicates a per-sample vector (C × n, 1×1 spatial) over h × w.
template <typename S>
Var<S> broadcast_spatial(Var<S> x, int out_h, int out_w) {
  if (x.h() != 1 || x.w() != 1) throw ShapeError("broadcast_spatial: expects 1x1 input");
  Graph<S>* g = x.graph;
  const Index P = Index(out_h) * out_w;
  Mat<S> y(x.channels(), P * x.n());
  for (int b = 0; b < x.n(); ++b) y.middleCols(b * P, P).colwise() = x.data().col(b);
  Tensor<S> out(std::move(y), x.n(), out_h, out_w);
  return g->emit(std::move(out), {x}, [g, ix = x.id, P](const Mat<S>& go) {
    if (!g->requires_grad(ix)) return;
    Mat<S>& dx = g->grad(ix);
    for (Index b = 0; b < dx.cols(); ++b) dx.col(b) += go.middleCols(b * P, P).rowwise().sum();
  });
}

// ---------------------------------------------------------------------------
// Point gather / scatter.

/// Gathers columns into a point tensor laid out as n samples × `per_sample`
/// points (h = 1, w = per_sample).
template <typename S>
Var<S> gather_columns(Var<S> x, const std::vector<Index>& columns, int batch,
                      int per_sample) {
  if (Index(columns.size()) != Index(batch) * per_sample) {
    throw ShapeError("gather_columns: index count does not match layout");
  }
  Graph<S>* g = x.graph;
  Mat<S> y(x.channels(), Index(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) y.col(j) = x.data().col(columns[j]);
  Tensor<S> out(std::move(y), batch, 1, per_sample);
  return g->emit(std::move(out), {x}, [g, ix = x.id, columns](const Mat<S>& go) {
    if (!g->requires_grad(ix)) return;
    Mat<S>& dx = g->grad(ix);
    for (std::size_t j = 0; j < columns.size(); ++j) dx.col(columns[j]) += go.col(j);
  });
}

/// Returns x with delta.col(j) added onto column columns[j]; every other
/// column is passed through untouched.
template <typename S>
Var<S> scatter_add_columns(Var<S> x, const std::vector<Index>& columns, Var<S> delta) {
  if (delta.channels() != x.channels() || delta.data().cols() != Index(columns.size())) {
    throw ShapeError("scatter_add_columns: delta shape mismatch");
  }
  Graph<S>* g = x.graph;
  Mat<S> y = x.data();
  for (std::size_t j = 0; j < columns.size(); ++j) y.col(columns[j]) += delta.data().col(j);
  Tensor<S> out(std::move(y), x.n(), x.h(), x.w());
  return g->emit(std::move(out), {x, delta},
                 [g, ix = x.id, id = delta.id, columns](const Mat<S>& go) {
                   detail::accumulate(g, ix, go);
                   if (g->requires_grad(id)) {
                     Mat<S>& dd = g->grad(id);
                     for (std::size_t j = 0; j < columns.size(); ++j) {
                       dd.col(j) += go.col(columns[j]);
                     }
                   }
                 });
}

// ---------------------------------------------------------------------------
// Scaled dot-product attention.

/// Multi-head scaled dot-product attention between point sets.
///
/// q is D × (n·Kq), k and v are D × (n·Mk), with D = heads·d_k. For each
/// sample and head, out = V·softmax(Kᵀ·Q / √d_k), the softmax taken over
/// the Mk keys for every query column. When `probs` is non-null it receives
/// one Mk × Kq matrix per (sample, head), sample-major.
template <typename S>
Var<S> attention(Var<S> q, Var<S> k, Var<S> v, int heads,
                 std::vector<Mat<S>>* probs = nullptr) {
  Graph<S>* g = q.graph;
  const Index D = q.channels();
  if (k.channels() != D || v.channels() != D || D % heads != 0) {
    throw ShapeError("attention: projected dims must match and divide by heads");
  }
  const int n = q.n();
  const Index kq = q.w(), mk = k.w();
  if (k.n() != n || v.n() != n || v.w() != mk) {
    throw ShapeError("attention: key/value layout mismatch");
  }
  const Index dk = D / heads;
  const S scale_factor = S(1) / std::sqrt(S(dk));
  auto saved = std::make_shared<std::vector<Mat<S>>>();
  saved->reserve(std::size_t(n) * heads);
  Mat<S> y(D, Index(n) * kq);
  for (int b = 0; b < n; ++b) {
    for (int hd = 0; hd < heads; ++hd) {
      auto qh = q.data().block(hd * dk, b * kq, dk, kq);
      auto kh = k.data().block(hd * dk, b * mk, dk, mk);
      auto vh = v.data().block(hd * dk, b * mk, dk, mk);
      Mat<S> a = (kh.transpose() * qh) * scale_factor;
      for (Index j = 0; j < kq; ++j) {
        const S m = a.col(j).maxCoeff();
        a.col(j) = (a.col(j).array() - m).exp();
        a.col(j) /= a.col(j).sum();
      }
      y.block(hd * dk, b * kq, dk, kq).noalias() = vh * a;
      saved->push_back(std::move(a));
    }
  }
  if (probs) *probs = *saved;
  Tensor<S> out(std::move(y), n, 1, int(kq));
  return g->emit(
      std::move(out), {q, k, v},
      [g, iq = q.id, ik = k.id, iv = v.id, saved, heads, n, kq, mk, dk,
       scale_factor](const Mat<S>& go) {
        const Mat<S>& qd = g->value(iq).data;
        const Mat<S>& kd = g->value(ik).data;
        const Mat<S>& vd = g->value(iv).data;
        for (int b = 0; b < n; ++b) {
          for (int hd = 0; hd < heads; ++hd) {
            const Mat<S>& a = (*saved)[std::size_t(b) * heads + hd];
            auto gout = go.block(hd * dk, b * kq, dk, kq);
            auto vh = vd.block(hd * dk, b * mk, dk, mk);
            if (g->requires_grad(iv)) {
              g->grad(iv).block(hd * dk, b * mk, dk, mk).noalias() += gout * a.transpose();
            }
            Mat<S> da = vh.transpose() * gout;
            Mat<S> ds = a.array() *
                        (da.array().rowwise() - (a.array() * da.array()).colwise().sum());
            ds *= scale_factor;
            if (g->requires_grad(iq)) {
              g->grad(iq).block(hd * dk, b * kq, dk, kq).noalias() +=
                  kd.block(hd * dk, b * mk, dk, mk) * ds;
            }
            if (g->requires_grad(ik)) {
              g->grad(ik).block(hd * dk, b * mk, dk, mk).noalias() +=
                  qd.block(hd * dk, b * kq, dk, kq) * ds.transpose();
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Scalar reductions.

/// Σ weights[i]·terms[i] over 1×1 scalars.
template <typename S>
Var<S> weighted_sum(const std::vector<Var<S>>& terms, const std::vector<S>& weights) {
  if (terms.empty() || terms.size() != weights.size()) {
    throw ShapeError("weighted_sum: term/weight count mismatch");
  }
  Graph<S>* g = terms.front().graph;
  S total = 0;
  for (std::size_t i = 0; i < terms.size(); ++i) total += weights[i] * terms[i].data()(0, 0);
  Mat<S> v(1, 1);
  v(0, 0) = total;
  std::vector<int> ids;
  for (const auto& t : terms) ids.push_back(t.id);
  return g->emit(Tensor<S>(std::move(v), 1, 1, 1), terms,
                 [g, ids, weights](const Mat<S>& go) {
                   for (std::size_t i = 0; i < ids.size(); ++i) {
                     detail::accumulate(g, ids[i], go * weights[i]);
                   }
                 });
}

/// Sum of squares of every element; handy scalar probe for gradient checks.
template <typename S>
Var<S> sum_squares(Var<S> x) {
  Graph<S>* g = x.graph;
  Mat<S> v(1, 1);
  v(0, 0) = x.data().squaredNorm();
  return g->emit(Tensor<S>(std::move(v), 1, 1, 1), {x}, [g, ix = x.id](const Mat<S>& go) {
    detail::accumulate(g, ix, g->value(ix).data * (S(2) * go(0, 0)));
  });
}

/// Σ x ⊙ probe; a random linear functional for gradient checks.
template <typename S>
Var<S> dot(Var<S> x, const Mat<S>& probe) {
  Graph<S>* g = x.graph;
  Mat<S> v(1, 1);
  v(0, 0) = (x.data().array() * probe.array()).sum();
  return g->emit(Tensor<S>(std::move(v), 1, 1, 1), {x},
                 [g, ix = x.id, probe](const Mat<S>& go) {
                   detail::accumulate(g, ix, probe * go(0, 0));
                 });
}

}  // namespace rfenet::ops
