#pragma once

#include <vector>

#include "swire/imaging/image.hpp"

namespace swire::baseline {

struct HogParams {
  int cell = 8;
  int bins = 9;
  float eps = 1e-6f;
};

// Per-cell unsigned orientation histograms, laid out (cells_y, cells_x, bins).
// Cells are L2-normalised in non-overlapping 2x2 blocks.
struct HogDescriptor {
  int cells_x = 0;
  int cells_y = 0;
  int bins = 0;
  std::vector<float> values;

  float at(int cx, int cy, int bin) const {
    return values[(static_cast<std::size_t>(cy) * cells_x + cx) * bins + bin];
  }
  std::size_t size() const { return values.size(); }
};

// Gradients by central differences; angles folded to [0, pi). Bin b is
// centred on b*pi/bins and each pixel's magnitude is split linearly between
// the two nearest centres. Images whose sides are not a multiple of the
// cell are padded by edge replication.
HogDescriptor hog(const GrayImage& img, const HogParams& params = {});
HogDescriptor hog(const EdgeMap& edges, const HogParams& params = {});

// 2x2-cell windows at every cell offset, each flattened to 4*bins floats,
// concatenated row-major: the "visual words" fed to the codebook.
std::vector<float> hog_patches(const HogDescriptor& desc);
inline int hog_patch_dim(int bins) { return 4 * bins; }

}  // namespace swire::baseline
