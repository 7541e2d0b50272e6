#pragma once

#include <array>
#include <string>
#include <vector>

#include "rfenet/layers.hpp"

namespace rfenet {

struct SmeConfig {
  int width = 16;
  int fuse_kernel = 3;
  std::array<int, 2> branch_kernels{5, 9};
  int head_depth = 2;
  int blocks = 1;

  void validate() const {
    if (width < 4) throw ConfigError("sme width must be >= 4");
    for (int k : branch_kernels) {
      if (k < 1 || k % 2 == 0) throw ConfigError("sme branch kernels must be odd");
    }
    if (fuse_kernel % 2 == 0) throw ConfigError("sme fuse kernel must be odd");
    if (head_depth < 0) throw ConfigError("sme head_depth must be >= 0");
    if (blocks < 1) throw ConfigError("sme blocks must be >= 1");
  }
};

/// Which halves of the mutual block are active. The defaults give the
/// bidirectional block; the one-way variants replace one enhancement with
/// identity and detach the other branch's contribution to the attention.
struct SmeAblation {
  bool enhance_semantic = true;
  bool enhance_boundary = true;
  bool detach_semantic_input = false;
  bool detach_boundary_input = false;
};

/// Value-level attention pair (a_s, a_b), each 1 × h × w in [0, 1].
template <typename S>
struct MutualAttention {
  FeatureMap<S> a_s;
  FeatureMap<S> a_b;
};

template <typename S>
MutualAttention<S> split_attention(const Tensor<S>& a) {
  return {Tensor<S>(a.data.topRows(1), a.n, a.h, a.w),
          Tensor<S>(a.data.bottomRows(1), a.n, a.h, a.w)};
}

/// F = conv(F_in ⊙ a) + F_in with a bias-free conv.
template <typename S>
Var<S> residual_enhance(Var<S> f_in, Var<S> a, const Conv2d<S>& conv) {
  return ops::add(conv(ops::gate(f_in, a)), f_in);
}

/// The basic mutual block.
template <typename S>
class SmeBlock {
 public:
  struct Output {
    Var<S> semantic;
    Var<S> boundary;
    Var<S> attention;  // 2 × h × w, rows (a_s, a_b)
  };

  SmeBlock(ParameterSet<S>& ps, const std::string& name, const SmeConfig& cfg,
           const SmeAblation& ablation, NormKind norm, Rng& rng)
      : ablation_(ablation) {
    const Index w = cfg.width;
    fuse_ = ConvNormAct<S>(ps, name + ".fuse", 2 * w, w, {cfg.fuse_kernel, 1, 1}, norm, rng);
    for (int k : cfg.branch_kernels) {
      branches_.emplace_back(ps, name + ".branch" + std::to_string(k), w, w,
                             ConvGeometry{k, 1, 1}, norm, rng);
    }
    Index in = w * Index(cfg.branch_kernels.size());
    for (int i = 0; i < cfg.head_depth; ++i) {
      head_.emplace_back(ps, name + ".head" + std::to_string(i), in, w, ConvGeometry{3, 1, 1},
                         norm, rng);
      in = w;
    }
    head_out_ = Conv2d<S>(ps, name + ".head_out", in, 2, {1, 1, 1}, true, rng);
    if (ablation.enhance_semantic) {
      enhance_s_ = Conv2d<S>(ps, name + ".enhance_s", w, w, {3, 1, 1}, false, rng);
    }
    if (ablation.enhance_boundary) {
      enhance_b_ = Conv2d<S>(ps, name + ".enhance_b", w, w, {3, 1, 1}, false, rng);
    }
  }

  /// σ(Aggregate([f_s; f_b])): 3×3 fuse → parallel 5×5 / 9×9 branches →
  /// concat → head convs → 1×1 to two channels → sigmoid.
  Var<S> aggregate(Var<S> f_s, Var<S> f_b) const {
    if (!f_s.value().same_layout(f_b.value())) {
      throw ShapeError("sme: semantic and boundary features differ in spatial size");
    }
    if (ablation_.detach_semantic_input) f_s = ops::stop_gradient(f_s);
    if (ablation_.detach_boundary_input) f_b = ops::stop_gradient(f_b);
    Var<S> fused = fuse_(ops::concat_channels<S>({f_s, f_b}));
    std::vector<Var<S>> parts;
    for (const auto& b : branches_) parts.push_back(b(fused));
    Var<S> x = ops::concat_channels(parts);
    for (const auto& h : head_) x = h(x);
    return ops::sigmoid(head_out_(x));
  }

  Output operator()(Var<S> f_s, Var<S> f_b) const {
    Var<S> a = aggregate(f_s, f_b);
    Var<S> a_s = ops::slice_channels(a, 0, 1);
    Var<S> a_b = ops::slice_channels(a, 1, 1);
    Var<S> out_s = ablation_.enhance_semantic ? residual_enhance(f_s, a_s, enhance_s_) : f_s;
    Var<S> out_b = ablation_.enhance_boundary ? residual_enhance(f_b, a_b, enhance_b_) : f_b;
    return {out_s, out_b, a};
  }

  Conv2d<S>& head_out() { return head_out_; }
  const Conv2d<S>& enhance_semantic() const { return enhance_s_; }
  const Conv2d<S>& enhance_boundary() const { return enhance_b_; }

 private:
  SmeAblation ablation_;
  ConvNormAct<S> fuse_;
  std::vector<ConvNormAct<S>> branches_;
  std::vector<ConvNormAct<S>> head_;
  Conv2d<S> head_out_;
  Conv2d<S> enhance_s_;
  Conv2d<S> enhance_b_;
};

/// One cascade stage's SME: 1×1 projections of both inputs to the working
/// width, then `blocks` mutual blocks. With mutual blocks disabled it reduces
/// to the projections alone.
template <typename S>
class SmeModule {
 public:
  struct Output {
    Var<S> semantic;
    Var<S> boundary;
    Var<S> attention;  // invalid when no mutual block ran
    Var<S> projected_semantic;
    Var<S> projected_boundary;
  };

  SmeModule(ParameterSet<S>& ps, const std::string& stage_name, Index semantic_channels,
            Index boundary_channels, const SmeConfig& cfg, bool with_blocks,
            const SmeAblation& ablation, NormKind norm, Rng& rng) {
    cfg.validate();
    proj_s_ = ConvNormAct<S>(ps, stage_name + ".proj_s", semantic_channels, cfg.width,
                             {1, 1, 1}, norm, rng);
    proj_b_ = ConvNormAct<S>(ps, stage_name + ".proj_b", boundary_channels, cfg.width,
                             {1, 1, 1}, norm, rng);
    if (with_blocks) {
      for (int i = 0; i < cfg.blocks; ++i) {
        blocks_.emplace_back(ps, stage_name + ".sme.block" + std::to_string(i), cfg, ablation,
                             norm, rng);
      }
    }
  }

  Output operator()(Var<S> f_s_in, Var<S> f_b_in) const {
    if (!f_s_in.value().same_layout(f_b_in.value())) {
      throw ShapeError("sme: semantic and boundary inputs differ in spatial size");
    }
    Output out;
    out.projected_semantic = proj_s_(f_s_in);
    out.projected_boundary = proj_b_(f_b_in);
    out.semantic = out.projected_semantic;
    out.boundary = out.projected_boundary;
    for (const auto& block : blocks_) {
      auto r = block(out.semantic, out.boundary);
      out.semantic = r.semantic;
      out.boundary = r.boundary;
      out.attention = r.attention;
    }
    return out;
  }

  std::vector<SmeBlock<S>>& blocks() { return blocks_; }
  const std::vector<SmeBlock<S>>& blocks() const { return blocks_; }

 private:
  ConvNormAct<S> proj_s_;
  ConvNormAct<S> proj_b_;
  std::vector<SmeBlock<S>> blocks_;
};

}  // namespace rfenet
