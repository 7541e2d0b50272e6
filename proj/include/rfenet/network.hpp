#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rfenet/encoder.hpp"
#include "rfenet/losses.hpp"
#include "rfenet/sar.hpp"
#include "rfenet/sme.hpp"
#include "rfenet/synthdata.hpp"

namespace rfenet {

/// Architecture variants. `full` is the complete cascade; the others remove
/// one mechanism each, and `baseline` is the plain two-stream network.
enum class Variant { full, no_sme, no_sar, no_cascade, oneway_s2b, oneway_b2s, baseline };

inline Variant parse_variant(const std::string& s) {
  if (s == "full") return Variant::full;
  if (s == "no_sme") return Variant::no_sme;
  if (s == "no_sar") return Variant::no_sar;
  if (s == "no_cascade") return Variant::no_cascade;
  if (s == "oneway_s2b") return Variant::oneway_s2b;
  if (s == "oneway_b2s") return Variant::oneway_b2s;
  if (s == "baseline") return Variant::baseline;
  throw ConfigError("unknown ablation variant '" + s +
                    "' (full, no_sme, no_sar, no_cascade, oneway_s2b, oneway_b2s, baseline)");
}

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_sme: return "no_sme";
    case Variant::no_sar: return "no_sar";
    case Variant::no_cascade: return "no_cascade";
    case Variant::oneway_s2b: return "oneway_s2b";
    case Variant::oneway_b2s: return "oneway_b2s";
    case Variant::baseline: return "baseline";
  }
  return "full";
}

struct NetworkConfig {
  int n_classes = 3;
  EncoderConfig encoder;
  SmeConfig sme;
  SarConfig sar;
  Variant variant = Variant::full;
  /// Next stage consumes the SAR output F^{s'} (true) or the SME output F^s.
  bool feed_refined = true;

  bool uses_sme() const { return variant != Variant::no_sme && variant != Variant::baseline; }
  bool uses_sar() const { return variant != Variant::no_sar && variant != Variant::baseline; }
  bool cascaded() const {
    return variant != Variant::no_cascade && variant != Variant::baseline;
  }

  SmeAblation sme_ablation() const {
    SmeAblation a;
    if (variant == Variant::oneway_s2b) {
      a.enhance_boundary = false;
      a.detach_semantic_input = true;
    } else if (variant == Variant::oneway_b2s) {
      a.enhance_semantic = false;
      a.detach_boundary_input = true;
    }
    return a;
  }

  std::vector<int> stage_ids() const {
    return cascaded() ? std::vector<int>{4, 3, 2, 1} : std::vector<int>{4};
  }

  void validate() const {
    if (n_classes < 2) throw ConfigError("n_classes must be >= 2");
    encoder.validate();
    sme.validate();
    sar.validate(sme.width);
  }
};

/// Per-stage tensors of the cascade (all at stride 4).
template <typename S>
struct StageOutput {
  int stage = 0;
  Var<S> semantic;         // F_i^s
  Var<S> boundary;         // F_i^b
  Var<S> refined;          // F_i^{s'}
  Var<S> attention;        // 2 × h × w, invalid without SME
  Var<S> semantic_logits;  // n × h × w, stage head on F_i^{s'}
  Var<S> boundary_logits;  // 1 × h × w
  SarTrace trace;
};

template <typename S>
struct NetworkOutput {
  Var<S> logits;  // n × H × W
  Var<S> semantic_input;
  Var<S> boundary_input;
  std::vector<StageOutput<S>> stages;  // descending stage order

  std::vector<Var<S>> stage_semantic_logits() const {
    std::vector<Var<S>> v;
    for (const auto& s : stages) v.push_back(s.semantic_logits);
    return v;
  }
  std::vector<Var<S>> stage_boundary_logits() const {
    std::vector<Var<S>> v;
    for (const auto& s : stages) v.push_back(s.boundary_logits);
    return v;
  }
  std::vector<int> stage_ids() const {
    std::vector<int> v;
    for (const auto& s : stages) v.push_back(s.stage);
    return v;
  }
};

/// F_in^s = F_5 resized to stride 4; F_in^b = [F_1; resized F_5].
template <typename S>
std::pair<Var<S>, Var<S>> build_inputs(const MultiScaleFeatures<S>& msf) {
  Var<S> f1 = msf.F(1);
  Var<S> f5 = ops::resize(msf.F(5), f1.h(), f1.w());
  return {f5, ops::concat_channels<S>({f1, f5})};
}

/// Stacks samples into a 3 × n·H·W image batch.
template <typename S>
Tensor<S> batch_images(const std::vector<const GlassSample*>& samples) {
  if (samples.empty()) throw ShapeError("empty batch");
  const int H = samples.front()->height, W = samples.front()->width;
  const Index P = Index(H) * W;
  Mat<S> data(3, P * Index(samples.size()));
  for (std::size_t b = 0; b < samples.size(); ++b) {
    if (samples[b]->height != H || samples[b]->width != W) {
      throw ShapeError("batch samples differ in size");
    }
    data.middleCols(Index(b) * P, P) = samples[b]->image.template cast<S>();
  }
  return Tensor<S>(std::move(data), int(samples.size()), H, W);
}

/// The cascaded two-branch segmentation network.
template <typename S>
class Network {
 public:
  Network(const NetworkConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg.validate();
    Rng rng(seed);
    encoder_.emplace(params_, "encoder", cfg.encoder, rng);
    const auto& c = cfg.encoder.widths;
    const Index w = cfg.sme.width;
    const NormKind norm = cfg.encoder.norm;
    for (int stage : cfg.stage_ids()) {
      const std::string name = "stage" + std::to_string(stage);
      const Index s_in = stage == 4 ? c[4] : w + c[stage];
      const Index b_in = stage == 4 ? c[0] + c[4] : w + c[0];
      Stage st{stage,
               SmeModule<S>(params_, name, s_in, b_in, cfg.sme, cfg.uses_sme(),
                            cfg.sme_ablation(), norm, rng),
               std::nullopt,
               Conv2d<S>(params_, name + ".head_s", w, cfg.n_classes, {1, 1, 1}, true, rng),
               Conv2d<S>(params_, name + ".head_b", w, 1, {1, 1, 1}, true, rng)};
      if (cfg.uses_sar()) st.sar.emplace(params_, name + ".sar", w, cfg.sar, rng);
      stages_.push_back(std::move(st));
    }
    const Index fin = w * Index(stages_.size());
    final_conv_ = ConvNormAct<S>(params_, "final.conv", fin, w, {3, 1, 1}, norm, rng);
    final_out_ = Conv2d<S>(params_, "final.out", w, cfg.n_classes, {1, 1, 1}, true, rng);
  }

  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  const NetworkConfig& config() const { return cfg_; }
  ParameterSet<S>& parameters() { return params_; }
  const ParameterSet<S>& parameters() const { return params_; }
  const Encoder<S>& encoder() const { return *encoder_; }

  SmeModule<S>& sme(int stage) { return find_stage(stage).sme; }
  SarBlock<S>* sar(int stage) {
    auto& st = find_stage(stage);
    return st.sar ? &*st.sar : nullptr;
  }

  /// Full forward pass on a 3 × n·H·W batch.
  NetworkOutput<S> forward(Var<S> image) const {
    const int H = image.h(), W = image.w();
    const MultiScaleFeatures<S> msf = (*encoder_)(image);
    const Var<S> f1 = msf.F(1);
    const int h = f1.h(), w = f1.w();
    NetworkOutput<S> out;
    std::tie(out.semantic_input, out.boundary_input) = build_inputs(msf);

    Var<S> prev_s, prev_b;
    for (const Stage& st : stages_) {
      Var<S> s_in = out.semantic_input, b_in = out.boundary_input;
      if (st.stage != 4) {
        Var<S> deeper = ops::resize(msf.F(st.stage + 1), h, w);
        s_in = ops::concat_channels<S>({prev_s, deeper});
        b_in = ops::concat_channels<S>({prev_b, f1});
      }
      auto sm = st.sme(s_in, b_in);
      StageOutput<S> so;
      so.stage = st.stage;
      so.semantic = sm.semantic;
      so.boundary = sm.boundary;
      so.attention = sm.attention;
      so.boundary_logits = st.head_b(sm.boundary);
      so.refined = sm.semantic;
      if (st.sar) {
        Var<S> pre = st.head_s(sm.semantic);
        so.refined = (*st.sar)(sm.semantic, sm.boundary, pre, so.boundary_logits, &so.trace);
      }
      so.semantic_logits = st.head_s(so.refined);
      prev_s = cfg_.feed_refined ? so.refined : so.semantic;
      prev_b = so.boundary;
      out.stages.push_back(std::move(so));
    }

    std::vector<Var<S>> finals;
    for (auto it = out.stages.rbegin(); it != out.stages.rend(); ++it) finals.push_back(it->refined);
    Var<S> x = final_conv_(ops::concat_channels(finals));
    out.logits = ops::resize(final_out_(x), H, W);
    return out;
  }

  /// Stable fingerprint of everything that defines the computation:
  /// parameter names and shapes plus the parameter-free knobs.
  std::uint64_t architecture_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](const std::string& s) {
      for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ull;
      }
      h ^= 0xff;
      h *= 0x100000001b3ull;
    };
    mix("n_classes=" + std::to_string(cfg_.n_classes));
    mix("os=" + std::to_string(cfg_.encoder.output_stride));
    mix("feed_refined=" + std::to_string(cfg_.feed_refined));
    mix("K=" + std::to_string(cfg_.sar.K) + ",M=" + std::to_string(cfg_.sar.M) +
        ",heads=" + std::to_string(cfg_.sar.heads) + ",dk=" + std::to_string(cfg_.sar.d_k));
    mix("variant=" + to_string(cfg_.variant));
    for (const auto& p : params_) {
      mix(p->name + ":" + std::to_string(p->value.rows()) + "x" + std::to_string(p->value.cols()));
    }
    return h;
  }

 private:
  struct Stage {
    int stage;
    SmeModule<S> sme;
    std::optional<SarBlock<S>> sar;
    Conv2d<S> head_s;
    Conv2d<S> head_b;
  };

  Stage& find_stage(int stage) {
    for (auto& st : stages_)
      if (st.stage == stage) return st;
    throw ConfigError("network has no stage " + std::to_string(stage));
  }

  NetworkConfig cfg_;
  ParameterSet<S> params_;
  std::optional<Encoder<S>> encoder_;
  std::vector<Stage> stages_;
  ConvNormAct<S> final_conv_;
  Conv2d<S> final_out_;
};

/// Joint supervision of a forward pass against its batch of samples.
template <typename S>
JointLoss<S> attach_supervision(const NetworkOutput<S>& out,
                                const std::vector<const GlassSample*>& batch, int n_classes,
                                const LossConfig& cfg) {
  std::vector<int> mask;
  std::vector<std::uint8_t> boundary;
  for (const GlassSample* s : batch) {
    for (int v : s->mask) {
      if (v < 0 || v >= n_classes) {
        throw DataError("sample " + s->id + ": class id " + std::to_string(v) +
                        " outside [0, " + std::to_string(n_classes) + ")");
      }
    }
    mask.insert(mask.end(), s->mask.begin(), s->mask.end());
    boundary.insert(boundary.end(), s->boundary.begin(), s->boundary.end());
  }
  return joint_loss(out.logits, out.stage_semantic_logits(), out.stage_boundary_logits(),
                    out.stage_ids(), mask, boundary, batch.front()->height,
                    batch.front()->width, cfg);
}

}  // namespace rfenet
