#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace dualstream {

/// Interleaved float image, channel values nominally in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<float> pixels;

  Image() = default;
  Image(int w, int h, int c, float fill = 0.0f)
      : width(w), height(h), channels(c), pixels(static_cast<std::size_t>(w) * h * c, fill) {}

  float& at(int x, int y, int c = 0) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float at(int x, int y, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  bool same_shape(const Image& other) const {
    return width == other.width && height == other.height && channels == other.channels;
  }
};

/// Luma for 3-channel input, identity for 1-channel.
Image to_grayscale(const Image& image);
Image resize_bilinear(const Image& image, int width, int height);

/// Binary PPM (3-channel) or PGM (1-channel), values clamped to [0, 1].
void write_pnm(const Image& image, const std::filesystem::path& path);

}  // namespace dualstream
