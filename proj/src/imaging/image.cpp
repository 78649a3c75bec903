#include "swire/imaging/image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "swire/util/error.hpp"

namespace swire {

GrayImage::GrayImage(int w, int h, float fill)
    : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {
  if (w < 0 || h < 0) throw InvalidArgument("negative image dimensions");
}

GrayImage::GrayImage(int w, int h, std::vector<float> values)
    : width(w), height(h), data(std::move(values)) {
  if (data.size() != static_cast<std::size_t>(w) * h) {
    throw ShapeError("GrayImage: data length does not match width x height");
  }
}

float GrayImage::at_clamped(int x, int y) const {
  x = std::clamp(x, 0, width - 1);
  y = std::clamp(y, 0, height - 1);
  return at(x, y);
}

RgbImage::RgbImage(int w, int h, float fill)
    : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

std::size_t EdgeMap::count() const {
  return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

GrayImage EdgeMap::to_gray() const {
  GrayImage g(width, height);
  for (std::size_t i = 0; i < data.size(); ++i) g.data[i] = data[i] ? 1.0f : 0.0f;
  return g;
}

double QuadCorners::signed_area() const {
  double s = 0.0;
  for (int i = 0; i < 4; ++i) {
    const auto& a = pts[i];
    const auto& b = pts[(i + 1) % 4];
    s += a.x * b.y - b.x * a.y;
  }
  return 0.5 * s;
}

namespace {

double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

bool segments_cross(const Point2& p1, const Point2& p2, const Point2& q1, const Point2& q2) {
  const double d1 = cross(q1, q2, p1);
  const double d2 = cross(q1, q2, p2);
  const double d3 = cross(p1, p2, q1);
  const double d4 = cross(p1, p2, q2);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0)) && d1 != 0 && d2 != 0 && d3 != 0 &&
         d4 != 0;
}

}  // namespace

bool QuadCorners::is_simple() const {
  return !segments_cross(pts[0], pts[1], pts[2], pts[3]) &&
         !segments_cross(pts[1], pts[2], pts[3], pts[0]);
}

QuadCorners QuadCorners::rectangle(double w, double h) {
  return {{Point2{0, 0}, Point2{w, 0}, Point2{w, h}, Point2{0, h}}};
}

void validate(const QuadCorners& quad) {
  for (const auto& p : quad.pts) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw InvalidArgument("quad corner is not finite");
  }
  double extent = 0.0;
  for (const auto& p : quad.pts) extent = std::max({extent, std::abs(p.x), std::abs(p.y)});
  const double tol = 1e-9 * std::max(1.0, extent * extent);
  for (int i = 0; i < 4; ++i) {
    const auto& a = quad.pts[i];
    const auto& b = quad.pts[(i + 1) % 4];
    const auto& c = quad.pts[(i + 2) % 4];
    if (std::abs(cross(a, b, c)) <= tol) throw InvalidArgument("degenerate (collinear) corners");
  }
  if (!quad.is_simple()) throw InvalidArgument("corners form a self-intersecting quadrilateral");
  if (quad.signed_area() <= 0.0) {
    throw InvalidArgument("corners must be ordered top-left, top-right, bottom-right, bottom-left");
  }
}

}  // namespace swire
