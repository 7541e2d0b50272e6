#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "rfenet/errors.hpp"

namespace rfenet {

using Index = Eigen::Index;

/// Dense row-major matrix; the storage type behind every tensor.
template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

/// A batch of C×h×w activation maps stored as a C × (n·h·w) matrix.
///
/// Row c holds channel c for every sample back to back; column
/// b·h·w + y·w + x addresses pixel (y, x) of sample b. A single feature map
/// is the n == 1 case, and point sets use h == 1, w == point count.
template <typename S>
struct Tensor {
  Mat<S> data;
  int n = 1;
  int h = 1;
  int w = 1;

  Tensor() = default;
  Tensor(Mat<S> d, int batch, int height, int width)
      : data(std::move(d)), n(batch), h(height), w(width) {
    if (data.cols() != Index(n) * h * w) {
      throw ShapeError("tensor columns " + std::to_string(data.cols()) +
                       " do not match n*h*w = " + std::to_string(n * h * w));
    }
  }

  static Tensor zeros(Index channels, int batch, int height, int width) {
    return Tensor(Mat<S>::Zero(channels, Index(batch) * height * width), batch,
                  height, width);
  }

  Index channels() const { return data.rows(); }
  int plane() const { return h * w; }
  Index columns() const { return data.cols(); }

  S& at(Index c, int b, int y, int x) {
    return data(c, Index(b) * plane() + y * w + x);
  }
  S at(Index c, int b, int y, int x) const {
    return data(c, Index(b) * plane() + y * w + x);
  }

  /// Sample b as a standalone n == 1 tensor.
  Tensor sample(int b) const {
    return Tensor(data.middleCols(Index(b) * plane(), plane()), 1, h, w);
  }

  bool same_layout(const Tensor& o) const {
    return n == o.n && h == o.h && w == o.w;
  }
};

template <typename S>
using FeatureMap = Tensor<S>;

template <typename S>
bool all_finite(const Mat<S>& m) {
  return m.allFinite();
}

// ---------------------------------------------------------------------------
// Convolution lowering.

struct ConvGeometry {
  int kernel = 3;
  int stride = 1;
  int dilation = 1;

  int pad() const { return dilation * (kernel - 1) / 2; }
  int out_size(int in) const {
    return (in + 2 * pad() - dilation * (kernel - 1) - 1) / stride + 1;
  }
};

/// Unfolds x (C × n·h·w) into cols (C·k·k × n·ho·wo) with zero padding.
template <typename S>
void im2col(const Tensor<S>& x, const ConvGeometry& g, Mat<S>& cols) {
  const int k = g.kernel, s = g.stride, d = g.dilation, p = g.pad();
  const int ho = g.out_size(x.h), wo = g.out_size(x.w);
  const Index out_plane = Index(ho) * wo;
  cols.resize(x.channels() * k * k, out_plane * x.n);
  for (Index c = 0; c < x.channels(); ++c) {
    const S* src = x.data.row(c).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        S* dst = cols.row((c * k + ky) * k + kx).data();
        for (int b = 0; b < x.n; ++b) {
          const S* plane = src + Index(b) * x.plane();
          S* out = dst + b * out_plane;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * s - p + ky * d;
            S* orow = out + oy * wo;
            if (iy < 0 || iy >= x.h) {
              std::fill(orow, orow + wo, S(0));
              continue;
            }
            const S* irow = plane + iy * x.w;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * s - p + kx * d;
              orow[ox] = (ix >= 0 && ix < x.w) ? irow[ix] : S(0);
            }
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: folds cols back into dx (accumulating).
template <typename S>
void col2im_add(const Mat<S>& cols, const ConvGeometry& g, Tensor<S>& dx) {
  const int k = g.kernel, s = g.stride, d = g.dilation, p = g.pad();
  const int ho = g.out_size(dx.h), wo = g.out_size(dx.w);
  const Index out_plane = Index(ho) * wo;
  for (Index c = 0; c < dx.channels(); ++c) {
    S* dst = dx.data.row(c).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const S* src = cols.row((c * k + ky) * k + kx).data();
        for (int b = 0; b < dx.n; ++b) {
          S* plane = dst + Index(b) * dx.plane();
          const S* in = src + b * out_plane;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * s - p + ky * d;
            if (iy < 0 || iy >= dx.h) continue;
            S* irow = plane + iy * dx.w;
            const S* orow = in + oy * wo;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * s - p + kx * d;
              if (ix >= 0 && ix < dx.w) irow[ix] += orow[ox];
            }
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Bilinear resampling, half-pixel centers (align_corners = false).

struct LerpTap {
  int i0 = 0;
  int i1 = 0;
  double w0 = 1.0;
  double w1 = 0.0;
};

inline std::vector<LerpTap> bilinear_taps(int in, int out) {
  std::vector<LerpTap> taps(out);
  const double scale = double(in) / double(out);
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int i0 = std::min(int(std::floor(src)), in - 1);
    int i1 = std::min(i0 + 1, in - 1);
    double l1 = src - i0;
    taps[o] = {i0, i1, 1.0 - l1, l1};
  }
  return taps;
}

template <typename S>
Tensor<S> bilinear_resize(const Tensor<S>& x, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ShapeError("resize target must be >= 1");
  if (out_h == x.h && out_w == x.w) return x;
  const auto ty = bilinear_taps(x.h, out_h);
  const auto tx = bilinear_taps(x.w, out_w);
  Tensor<S> y = Tensor<S>::zeros(x.channels(), x.n, out_h, out_w);
  for (Index c = 0; c < x.channels(); ++c) {
    for (int b = 0; b < x.n; ++b) {
      for (int oy = 0; oy < out_h; ++oy) {
        const LerpTap& a = ty[oy];
        for (int ox = 0; ox < out_w; ++ox) {
          const LerpTap& e = tx[ox];
          y.at(c, b, oy, ox) =
              S(a.w0) * (S(e.w0) * x.at(c, b, a.i0, e.i0) +
                         S(e.w1) * x.at(c, b, a.i0, e.i1)) +
              S(a.w1) * (S(e.w0) * x.at(c, b, a.i1, e.i0) +
                         S(e.w1) * x.at(c, b, a.i1, e.i1));
        }
      }
    }
  }
  return y;
}

/// Adjoint of bilinear_resize: spreads dy (at out size) into dx.
template <typename S>
void bilinear_resize_adjoint_add(const Tensor<S>& dy, Tensor<S>& dx) {
  if (dy.h == dx.h && dy.w == dx.w) {
    dx.data += dy.data;
    return;
  }
  const auto ty = bilinear_taps(dx.h, dy.h);
  const auto tx = bilinear_taps(dx.w, dy.w);
  for (Index c = 0; c < dy.channels(); ++c) {
    for (int b = 0; b < dy.n; ++b) {
      for (int oy = 0; oy < dy.h; ++oy) {
        const LerpTap& a = ty[oy];
        for (int ox = 0; ox < dy.w; ++ox) {
          const LerpTap& e = tx[ox];
          const S g = dy.at(c, b, oy, ox);
          dx.at(c, b, a.i0, e.i0) += S(a.w0 * e.w0) * g;
          dx.at(c, b, a.i0, e.i1) += S(a.w0 * e.w1) * g;
          dx.at(c, b, a.i1, e.i0) += S(a.w1 * e.w0) * g;
          dx.at(c, b, a.i1, e.i1) += S(a.w1 * e.w1) * g;
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Value-level helpers shared by selection, losses and metrics.

/// Column-wise softmax over the channel axis.
template <typename S>
Mat<S> channel_softmax(const Mat<S>& logits) {
  Mat<S> p(logits.rows(), logits.cols());
  for (Index j = 0; j < logits.cols(); ++j) {
    const S m = logits.col(j).maxCoeff();
    S z = 0;
    for (Index c = 0; c < logits.rows(); ++c) {
      p(c, j) = std::exp(logits(c, j) - m);
      z += p(c, j);
    }
    p.col(j) /= z;
  }
  return p;
}

template <typename S>
S stable_sigmoid(S x) {
  if (x >= 0) return S(1) / (S(1) + std::exp(-x));
  const S e = std::exp(x);
  return e / (S(1) + e);
}

template <typename S>
Mat<S> sigmoid_values(const Mat<S>& x) {
  return x.unaryExpr([](S v) { return stable_sigmoid(v); });
}

/// Per-column argmax over channels (first maximum wins).
template <typename S>
std::vector<int> channel_argmax(const Mat<S>& scores) {
  std::vector<int> out(scores.cols());
  for (Index j = 0; j < scores.cols(); ++j) {
    Index best = 0;
    for (Index c = 1; c < scores.rows(); ++c) {
      if (scores(c, j) > scores(best, j)) best = c;
    }
    out[j] = int(best);
  }
  return out;
}

}  // namespace rfenet
