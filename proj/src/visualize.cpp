#include "rfenet/visualize.hpp"

#include <algorithm>
#include <cmath>

namespace rfenet {

namespace fs = std::filesystem;

namespace {

std::uint8_t to_byte(double v) {
  return std::uint8_t(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
}

constexpr std::uint8_t kPalette[][3] = {
    {0, 0, 0},     {0, 160, 255}, {255, 170, 0}, {80, 220, 100},
    {230, 60, 200}, {250, 250, 80}, {120, 90, 255}, {255, 255, 255},
};

}  // namespace

Image8 heatmap(const Mat<float>& values, int height, int width) {
  if (values.size() != Index(height) * width) throw ShapeError("heatmap: size mismatch");
  Image8 img{height, width, 1, std::vector<std::uint8_t>(std::size_t(values.size()))};
  for (Index i = 0; i < values.size(); ++i) img.pixels[std::size_t(i)] = to_byte(values.data()[i]);
  return img;
}

Image8 colorize_labels(const std::vector<int>& labels, int height, int width) {
  if (labels.size() != std::size_t(height) * width) throw ShapeError("colorize: size mismatch");
  Image8 img{height, width, 3, std::vector<std::uint8_t>(labels.size() * 3)};
  constexpr int n = int(std::size(kPalette));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& c = kPalette[((labels[i] % n) + n) % n];
    std::copy(c, c + 3, img.pixels.begin() + std::ptrdiff_t(i * 3));
  }
  return img;
}

Tensor<float> image_tensor(const Image8& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw DataError("expected a gray or RGB image, got " + std::to_string(image.channels) +
                    " channels");
  }
  const Index P = Index(image.height) * image.width;
  Mat<float> data(3, P);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const Index j = Index(y) * image.width + x;
      for (int c = 0; c < 3; ++c) {
        data(c, j) = float(image.at(y, x, image.channels == 3 ? c : 0)) / 255.0f;
      }
    }
  }
  return Tensor<float>(std::move(data), 1, image.height, image.width);
}

VisualizationSet visualize(const Network<float>& net, const Tensor<float>& image,
                           const std::string& stem, const fs::path& out_dir) {
  if (image.n != 1) throw ShapeError("visualize takes a single image");
  fs::create_directories(out_dir);
  Graph<float> g(false, false);
  const NetworkOutput<float> out = net.forward(g.input(image));
  const int H = image.h, W = image.w;

  VisualizationSet vs;
  auto emit = [&](const std::string& suffix, const Image8& img) {
    const fs::path p = out_dir / (stem + suffix);
    write_png(p, img);
    vs.files.push_back(p);
  };

  for (const auto& st : out.stages) {
    const std::string tag = "_stage" + std::to_string(st.stage);
    const int h = st.boundary_logits.h(), w = st.boundary_logits.w();
    if (st.attention.valid()) {
      const Mat<float>& a = st.attention.data();
      emit(tag + "_as.png", heatmap(a.row(0), h, w));
      emit(tag + "_ab.png", heatmap(a.row(1), h, w));
    }
    emit(tag + "_bnd.png", heatmap(sigmoid_values(st.boundary_logits.data()), h, w));
  }

  // Overlay of the finest stage's selected points.
  const StageOutput<float>& finest = out.stages.back();
  vs.stride = H / finest.boundary_logits.h();
  if (!finest.trace.uncertain.empty()) vs.uncertain = finest.trace.uncertain.front();
  Image8 overlay{H, W, 3, std::vector<std::uint8_t>(std::size_t(H) * W * 3)};
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < 3; ++c) overlay.at(y, x, c) = to_byte(0.7 * image.at(c, 0, y, x));
    }
  }
  const int w_stage = finest.boundary_logits.w();
  for (Index idx : vs.uncertain) {
    const int sy = int(idx / w_stage), sx = int(idx % w_stage);
    for (int y = sy * vs.stride; y < std::min(H, (sy + 1) * vs.stride); ++y) {
      for (int x = sx * vs.stride; x < std::min(W, (sx + 1) * vs.stride); ++x) {
        overlay.at(y, x, 0) = 255;
        overlay.at(y, x, 1) = 0;
        overlay.at(y, x, 2) = 0;
      }
    }
  }
  emit("_uncertain.png", overlay);
  emit("_seg.png", colorize_labels(channel_argmax(out.logits.data()), H, W));
  return vs;
}

}  // namespace rfenet
