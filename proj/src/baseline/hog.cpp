#include "swire/baseline/hog.hpp"

#include <cmath>
#include <numbers>

#include "swire/util/error.hpp"

namespace swire::baseline {

HogDescriptor hog(const GrayImage& img, const HogParams& params) {
  if (img.empty()) throw InvalidArgument("hog: empty image");
  if (params.bins < 2) throw InvalidArgument("hog: need at least 2 orientation bins");
  if (params.cell < 1) throw InvalidArgument("hog: cell size must be >= 1");
  const int cell = params.cell;
  const int bins = params.bins;
  const int cx = (img.width + cell - 1) / cell;
  const int cy = (img.height + cell - 1) / cell;
  HogDescriptor desc{cx, cy, bins, std::vector<float>(static_cast<std::size_t>(cx) * cy * bins, 0.0f)};

  const double bin_width = std::numbers::pi / bins;
  // Padded extent; at_clamped supplies the replicated border.
  for (int y = 0; y < cy * cell; ++y) {
    for (int x = 0; x < cx * cell; ++x) {
      const double gx = img.at_clamped(x + 1, y) - img.at_clamped(x - 1, y);
      const double gy = img.at_clamped(x, y + 1) - img.at_clamped(x, y - 1);
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;
      double angle = std::atan2(gy, gx);
      if (angle < 0) angle += std::numbers::pi;
      if (angle >= std::numbers::pi) angle -= std::numbers::pi;
      const double pos = angle / bin_width;
      const int b0 = static_cast<int>(std::floor(pos)) % bins;
      const int b1 = (b0 + 1) % bins;
      const double t = pos - std::floor(pos);
      float* h = &desc.values[(static_cast<std::size_t>(y / cell) * cx + x / cell) * bins];
      h[b0] += static_cast<float>(mag * (1.0 - t));
      h[b1] += static_cast<float>(mag * t);
    }
  }

  for (int by = 0; by < cy; by += 2) {
    for (int bx = 0; bx < cx; bx += 2) {
      double sq = 0.0;
      for (int y = by; y < std::min(by + 2, cy); ++y) {
        for (int x = bx; x < std::min(bx + 2, cx); ++x) {
          for (int b = 0; b < bins; ++b) {
            const double v = desc.values[(static_cast<std::size_t>(y) * cx + x) * bins + b];
            sq += v * v;
          }
        }
      }
      const double norm = std::sqrt(sq + static_cast<double>(params.eps) * params.eps);
      for (int y = by; y < std::min(by + 2, cy); ++y) {
        for (int x = bx; x < std::min(bx + 2, cx); ++x) {
          for (int b = 0; b < bins; ++b) {
            auto& v = desc.values[(static_cast<std::size_t>(y) * cx + x) * bins + b];
            v = static_cast<float>(v / norm);
          }
        }
      }
    }
  }
  return desc;
}

HogDescriptor hog(const EdgeMap& edges, const HogParams& params) { return hog(edges.to_gray(), params); }

std::vector<float> hog_patches(const HogDescriptor& desc) {
  std::vector<float> out;
  if (desc.cells_x < 2 || desc.cells_y < 2) return out;
  const int b = desc.bins;
  out.reserve(static_cast<std::size_t>(desc.cells_x - 1) * (desc.cells_y - 1) * 4 * b);
  for (int y = 0; y + 1 < desc.cells_y; ++y) {
    for (int x = 0; x + 1 < desc.cells_x; ++x) {
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const float* h = &desc.values[(static_cast<std::size_t>(y + dy) * desc.cells_x + x + dx) * b];
          out.insert(out.end(), h, h + b);
        }
      }
    }
  }
  return out;
}

}  // namespace swire::baseline
