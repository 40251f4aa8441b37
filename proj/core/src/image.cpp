#include "dualstream/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dualstream/error.hpp"

namespace dualstream {

Image to_grayscale(const Image& image) {
  if (image.channels == 1) return image;
  if (image.channels != 3) throw ArgumentError("grayscale conversion expects 1 or 3 channels");
  Image out(image.width, image.height, 1);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      out.at(x, y) =
          0.299f * image.at(x, y, 0) + 0.587f * image.at(x, y, 1) + 0.114f * image.at(x, y, 2);
    }
  }
  return out;
}

Image resize_bilinear(const Image& image, int width, int height) {
  if (image.width < 1 || image.height < 1 || width < 1 || height < 1) {
    throw ArgumentError("resize needs non-empty source and target");
  }
  if (image.width == width && image.height == height) return image;
  Image out(width, height, image.channels);
  const double sx = static_cast<double>(image.width) / width;
  const double sy = static_cast<double>(image.height) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const auto wy = static_cast<float>(fy - y0);
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const auto wx = static_cast<float>(fx - x0);
      for (int c = 0; c < image.channels; ++c) {
        const float top = image.at(x0, y0, c) * (1 - wx) + image.at(x1, y0, c) * wx;
        const float bottom = image.at(x0, y1, c) * (1 - wx) + image.at(x1, y1, c) * wx;
        out.at(x, y, c) = top * (1 - wy) + bottom * wy;
      }
    }
  }
  return out;
}

void write_pnm(const Image& image, const std::filesystem::path& path) {
  if (image.channels != 1 && image.channels != 3) {
    throw ArgumentError("PNM output supports 1 or 3 channels");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write " + path.string());
  out << (image.channels == 3 ? "P6" : "P5") << '\n'
      << image.width << ' ' << image.height << "\n255\n";
  std::vector<unsigned char> bytes(image.pixels.size());
  std::transform(image.pixels.begin(), image.pixels.end(), bytes.begin(), [](float v) {
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
  });
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace dualstream
