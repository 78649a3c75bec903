#pragma once

#include <array>
#include <optional>

#include "swire/imaging/image.hpp"
#include "swire/numerics/tensor.hpp"

namespace swire::imaging {

GrayImage to_gray(const RgbImage& img);

// Bilinear resampling with pixel centres aligned (half-pixel convention).
GrayImage resize(const GrayImage& img, int w, int h);

// v -> 2v - 1, shaped (1, h, w).
Tensor normalize_signed(const GrayImage& img);

GrayImage crop(const GrayImage& img, int x0, int y0, int w, int h);

struct CannyParams {
  double sigma = 1.4;
  double low = 0.1;   // fraction of the max gradient magnitude
  double high = 0.2;
};

EdgeMap canny(const GrayImage& img, const CannyParams& params = {});

// Gaussian smoothing (radius ceil(3 sigma), replicated border) followed by
// the 3x3 Sobel magnitude. Exposed because the thresholds are relative to it.
std::vector<double> sobel_magnitude(const GrayImage& img, double sigma);

// 3x3 projective transform, row-major, h[8] == 1 after normalisation.
struct Homography {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  Point2 apply(Point2 p) const;
  Homography inverse() const;
  Homography operator*(const Homography& rhs) const;
};

enum class WarpModel { projective, affine };

// Transform taking each src point to the matching dst point. Projective
// fits all 8 DOF; affine is the least-squares 6-DOF fit.
Homography fit_homography(const std::array<Point2, 4>& src, const std::array<Point2, 4>& dst,
                          WarpModel model = WarpModel::projective);

// out(x, y) = img(H(x, y)) with bilinear sampling; `fill` outside the source.
GrayImage warp(const GrayImage& img, const Homography& out_to_src, int out_w, int out_h,
               float fill = 1.0f);

// Maps the quad onto the dst_w x dst_h rectangle whose corner pixel centres
// are (0,0), (w-1,0), (w-1,h-1), (0,h-1). Out-of-source samples are white.
GrayImage rectify(const GrayImage& img, const QuadCorners& src, int dst_w, int dst_h,
                  WarpModel model = WarpModel::projective);

// v < thresh -> 0 (ink), else 1.
GrayImage binarize(const GrayImage& img, float thresh = 0.5f);

// Locates four solid dark fiducial squares near the image corners and
// returns their inner corners. nullopt if four plausible markers are not found.
std::optional<QuadCorners> detect_frame_corners(const GrayImage& photo, float dark_thresh = 0.35f);

}  // namespace swire::imaging
