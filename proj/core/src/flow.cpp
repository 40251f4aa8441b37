#include "dualstream/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "dualstream/error.hpp"

namespace dualstream {

BlockMatchingFlow::BlockMatchingFlow(BlockMatchingOptions options) : options_(options) {
  if (options_.block_size < 1 || options_.search_radius < 0) {
    throw ArgumentError("block matching needs block_size >= 1 and search_radius >= 0");
  }
}

FlowField BlockMatchingFlow::estimate(const Image& first, const Image& second) const {
  if (!first.same_shape(second)) throw ArgumentError("flow frames must have the same shape");
  const Image a = to_grayscale(first);
  const Image b = to_grayscale(second);
  FlowField field(a.width, a.height);
  const int bs = options_.block_size;
  const int r = options_.search_radius;

  for (int by = 0; by < a.height; by += bs) {
    const int bh = std::min(bs, a.height - by);
    for (int bx = 0; bx < a.width; bx += bs) {
      const int bw = std::min(bs, a.width - bx);
      double best_cost = std::numeric_limits<double>::infinity();
      int best_dx = 0;
      int best_dy = 0;
      for (int dy = -r; dy <= r; ++dy) {
        if (by + dy < 0 || by + dy + bh > b.height) continue;
        for (int dx = -r; dx <= r; ++dx) {
          if (bx + dx < 0 || bx + dx + bw > b.width) continue;
          double cost = 0.0;
          for (int y = 0; y < bh && cost <= best_cost; ++y) {
            for (int x = 0; x < bw; ++x) {
              cost += std::abs(a.at(bx + x, by + y) - b.at(bx + dx + x, by + dy + y));
            }
          }
          const bool shorter = dx * dx + dy * dy < best_dx * best_dx + best_dy * best_dy;
          if (cost < best_cost || (cost == best_cost && shorter)) {
            best_cost = cost;
            best_dx = dx;
            best_dy = dy;
          }
        }
      }
      for (int y = by; y < by + bh; ++y) {
        for (int x = bx; x < bx + bw; ++x) {
          field.dx[field.index(x, y)] = static_cast<float>(best_dx);
          field.dy[field.index(x, y)] = static_cast<float>(best_dy);
        }
      }
    }
  }
  return field;
}

FlowField compute_flow(const Image& first, const Image& second,
                       const BlockMatchingOptions& options) {
  return BlockMatchingFlow(options).estimate(first, second);
}

Image render_flow(const FlowField& field) {
  Image out(field.width, field.height, 3, 1.0f);
  float max_magnitude = 0.0f;
  for (std::size_t i = 0; i < field.dx.size(); ++i) {
    max_magnitude = std::max(max_magnitude, std::hypot(field.dx[i], field.dy[i]));
  }
  if (max_magnitude == 0.0f) return out;

  for (int y = 0; y < field.height; ++y) {
    for (int x = 0; x < field.width; ++x) {
      const auto i = field.index(x, y);
      const float saturation = std::hypot(field.dx[i], field.dy[i]) / max_magnitude;
      double hue = std::atan2(field.dy[i], field.dx[i]) * 180.0 / std::numbers::pi;
      if (hue < 0.0) hue += 360.0;
      // HSV -> RGB with V = 1.
      const double sector = hue / 60.0;
      const int h = static_cast<int>(sector) % 6;
      const double f = sector - std::floor(sector);
      const auto p = static_cast<float>(1.0 - saturation);
      const auto q = static_cast<float>(1.0 - saturation * f);
      const auto t = static_cast<float>(1.0 - saturation * (1.0 - f));
      float rgb[3];
      switch (h) {
        case 0: rgb[0] = 1; rgb[1] = t; rgb[2] = p; break;
        case 1: rgb[0] = q; rgb[1] = 1; rgb[2] = p; break;
        case 2: rgb[0] = p; rgb[1] = 1; rgb[2] = t; break;
        case 3: rgb[0] = p; rgb[1] = q; rgb[2] = 1; break;
        case 4: rgb[0] = t; rgb[1] = p; rgb[2] = 1; break;
        default: rgb[0] = 1; rgb[1] = p; rgb[2] = q; break;
      }
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = rgb[c];
    }
  }
  return out;
}

}  // namespace dualstream
