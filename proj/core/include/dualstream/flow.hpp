#pragma once

#include <cstddef>
#include <vector>

#include "dualstream/image.hpp"

namespace dualstream {

/// Per-pixel displacement from the first frame to the second, in pixels.
struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<float> dx;
  std::vector<float> dy;

  FlowField() = default;
  FlowField(int w, int h)
      : width(w),
        height(h),
        dx(static_cast<std::size_t>(w) * h, 0.0f),
        dy(static_cast<std::size_t>(w) * h, 0.0f) {}

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
};

class FlowEstimator {
 public:
  virtual ~FlowEstimator() = default;
  virtual FlowField estimate(const Image& first, const Image& second) const = 0;
};

struct BlockMatchingOptions {
  int block_size = 8;
  int search_radius = 8;
};

/// Exhaustive SAD block matching on luma. Every pixel of a block receives the
/// block's displacement; among equal-cost candidates the shortest wins, so
/// identical frames give an all-zero field.
class BlockMatchingFlow final : public FlowEstimator {
 public:
  explicit BlockMatchingFlow(BlockMatchingOptions options = {});
  FlowField estimate(const Image& first, const Image& second) const override;

 private:
  BlockMatchingOptions options_;
};

FlowField compute_flow(const Image& first, const Image& second,
                       const BlockMatchingOptions& options = {});

/// Color-wheel rendering: hue follows the flow angle, saturation the magnitude
/// relative to the field's maximum, value fixed at 1. Zero flow is white.
Image render_flow(const FlowField& field);

}  // namespace dualstream
