#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace rfenet {

/// 8-bit image, row-major, interleaved channels (1 = gray, 3 = RGB).
struct Image8 {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;

  std::uint8_t& at(int y, int x, int c = 0) {
    return pixels[(std::size_t(y) * width + x) * channels + c];
  }
  std::uint8_t at(int y, int x, int c = 0) const {
    return pixels[(std::size_t(y) * width + x) * channels + c];
  }
};

void write_png(const std::filesystem::path& path, const Image8& image);
Image8 read_png(const std::filesystem::path& path);

}  // namespace rfenet
