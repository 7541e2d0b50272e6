#pragma once

#include <array>
#include <string>
#include <vector>

#include "rfenet/layers.hpp"

namespace rfenet {

/// Toy backbone settings. Stage strides are {4, 8, min(16, OS), OS, OS}.
struct EncoderConfig {
  int output_stride = 16;
  std::array<int, 5> widths{16, 24, 32, 48, 64};
  bool context_block = true;
  NormKind norm = NormKind::group;

  void validate() const {
    if (output_stride != 8 && output_stride != 16) {
      throw ConfigError("output_stride must be 8 or 16, got " + std::to_string(output_stride));
    }
    for (int w : widths) {
      if (w < 4) throw ConfigError("encoder widths must all be >= 4");
    }
  }

  std::array<int, 5> strides() const {
    return {4, 8, std::min(16, output_stride), output_stride, output_stride};
  }
};

/// The encoder pyramid F_1…F_5 (1-based accessors) plus stride metadata.
template <typename S>
struct MultiScaleFeatures {
  std::array<Var<S>, 5> features;
  std::array<int, 5> strides{};
  std::array<Index, 5> channels{};

  Var<S> F(int stage) const { return features.at(stage - 1); }
  int stride(int stage) const { return strides.at(stage - 1); }
  Index channel_count(int stage) const { return channels.at(stage - 1); }
};

template <typename S>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(ParameterSet<S>& ps, const std::string& name, Index in_channels,
                Index out_channels, int stride, int dilation, NormKind norm, Rng& rng)
      : first_(ps, name + ".conv1", in_channels, out_channels, {3, stride, dilation}, norm, rng),
        second_(ps, name + ".conv2", out_channels, out_channels, {3, 1, dilation}, false, rng),
        second_norm_(ps, name + ".norm2", out_channels, norm) {
    if (stride != 1 || in_channels != out_channels) {
      shortcut_ = Conv2d<S>(ps, name + ".shortcut", in_channels, out_channels, {1, stride, 1},
                            false, rng);
      shortcut_norm_ = Norm<S>(ps, name + ".shortcut_norm", out_channels, norm);
      project_ = true;
    }
  }

  Var<S> operator()(Var<S> x) const {
    Var<S> main = second_norm_(second_(first_(x)));
    Var<S> skip = project_ ? shortcut_norm_(shortcut_(x)) : x;
    return ops::relu(ops::add(main, skip));
  }

 private:
  ConvNormAct<S> first_;
  Conv2d<S> second_;
  Norm<S> second_norm_;
  Conv2d<S> shortcut_;
  Norm<S> shortcut_norm_;
  bool project_ = false;
};

/// Atrous context block: parallel dilated 3×3 convs (1, 2, 4, 8) plus a
/// global-pool branch, concatenated and fused by a 1×1 conv.
template <typename S>
class ContextBlock {
 public:
  ContextBlock() = default;
  ContextBlock(ParameterSet<S>& ps, const std::string& name, Index channels, NormKind norm,
               Rng& rng) {
    Index branch = std::max<Index>(4, channels / 4);
    branch += (4 - branch % 4) % 4;
    for (int d : {1, 2, 4, 8}) {
      branches_.emplace_back(ps, name + ".dil" + std::to_string(d), channels, branch,
                             ConvGeometry{3, 1, d}, norm, rng);
    }
    pool_ = Conv2d<S>(ps, name + ".pool", channels, branch, {1, 1, 1}, true, rng);
    fuse_ = ConvNormAct<S>(ps, name + ".fuse", branch * 5, channels, {1, 1, 1}, norm, rng);
  }

  Var<S> operator()(Var<S> x) const {
    std::vector<Var<S>> parts;
    for (const auto& b : branches_) parts.push_back(b(x));
    Var<S> pooled = ops::relu(pool_(ops::global_avg_pool(x)));
    parts.push_back(ops::broadcast_spatial(pooled, x.h(), x.w()));
    return fuse_(ops::concat_channels(parts));
  }

 private:
  std::vector<ConvNormAct<S>> branches_;
  Conv2d<S> pool_;
  ConvNormAct<S> fuse_;
};

/// Five-stage residual encoder. Stages that would exceed the output stride
/// keep their resolution and switch to dilation-2 convolutions.
template <typename S>
class Encoder {
 public:
  Encoder(ParameterSet<S>& ps, const std::string& name, const EncoderConfig& cfg, Rng& rng)
      : cfg_(cfg) {
    cfg.validate();
    const auto& w = cfg.widths;
    stem1_ = ConvNormAct<S>(ps, name + ".stem1", 3, w[0], {3, 2, 1}, cfg.norm, rng);
    stem2_ = ConvNormAct<S>(ps, name + ".stem2", w[0], w[0], {3, 2, 1}, cfg.norm, rng);
    const auto strides = cfg.strides();
    stages_.emplace_back(ps, name + ".stage1", w[0], w[0], 1, 1, cfg.norm, rng);
    for (int i = 1; i < 5; ++i) {
      const bool downsample = strides[i] == 2 * strides[i - 1];
      stages_.emplace_back(ps, name + ".stage" + std::to_string(i + 1), w[i - 1], w[i],
                           downsample ? 2 : 1, downsample ? 1 : 2, cfg.norm, rng);
    }
    if (cfg.context_block) context_ = ContextBlock<S>(ps, name + ".context", w[4], cfg.norm, rng);
  }

  /// image: 3 × n·H·W with H, W divisible by 32.
  MultiScaleFeatures<S> operator()(Var<S> image) const {
    if (image.channels() != 3) throw ShapeError("encode: image must have 3 channels");
    if (image.h() % 32 != 0) {
      throw ShapeError("encode: height " + std::to_string(image.h()) + " not divisible by 32");
    }
    if (image.w() % 32 != 0) {
      throw ShapeError("encode: width " + std::to_string(image.w()) + " not divisible by 32");
    }
    MultiScaleFeatures<S> out;
    out.strides = cfg_.strides();
    Var<S> x = stem2_(stem1_(image));
    for (int i = 0; i < 5; ++i) {
      x = stages_[i](x);
      if (i == 4 && cfg_.context_block) x = context_(x);
      out.features[i] = x;
      out.channels[i] = x.channels();
    }
    return out;
  }

  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  ConvNormAct<S> stem1_;
  ConvNormAct<S> stem2_;
  std::vector<ResidualBlock<S>> stages_;
  ContextBlock<S> context_;
};

/// Bilinear resampling of a feature map to stage-1 resolution.
template <typename S>
FeatureMap<S> resize_to_stage1(const FeatureMap<S>& f, int target_h, int target_w) {
  return bilinear_resize(f, target_h, target_w);
}

}  // namespace rfenet
