#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rfenet/network.hpp"
#include "rfenet/png_io.hpp"

namespace rfenet {

/// Grayscale heatmap: pixel = round(255 · clamp(value, 0, 1)).
Image8 heatmap(const Mat<float>& values, int height, int width);

/// Class-index map rendered with a fixed palette (background black).
Image8 colorize_labels(const std::vector<int>& labels, int height, int width);

/// 3 × H·W image in [0, 1] from an 8-bit RGB or gray PNG.
Tensor<float> image_tensor(const Image8& image);

struct VisualizationSet {
  std::vector<std::filesystem::path> files;
  std::vector<Index> uncertain;  // stage-1 selected indices at stage resolution
  int stride = 4;                // input pixels per stage pixel
};

/// Writes `<stem>_stage<i>_{as,ab,bnd}.png` for every stage, the stage-1
/// uncertain-point overlay `<stem>_uncertain.png` (selected points in pure
/// red over the dimmed image) and the prediction `<stem>_seg.png`.
VisualizationSet visualize(const Network<float>& net, const Tensor<float>& image,
                           const std::string& stem, const std::filesystem::path& out_dir);

}  // namespace rfenet
