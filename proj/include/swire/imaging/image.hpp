#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace swire {

// Row-major single-channel raster, intensities in [0, 1] (0 = black).
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  GrayImage() = default;
  GrayImage(int w, int h, float fill = 0.0f);
  GrayImage(int w, int h, std::vector<float> values);

  float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  // Coordinates clamped to the border.
  float at_clamped(int x, int y) const;
  bool empty() const { return width == 0 || height == 0; }
  std::size_t size() const { return data.size(); }

  bool operator==(const GrayImage&) const = default;
};

// Row-major interleaved RGB, values in [0, 1].
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  RgbImage() = default;
  RgbImage(int w, int h, float fill = 0.0f);

  float* pixel(int x, int y) { return data.data() + 3 * (static_cast<std::size_t>(y) * width + x); }
  const float* pixel(int x, int y) const {
    return data.data() + 3 * (static_cast<std::size_t>(y) * width + x);
  }
};

// Binary map, 1 = edge.
struct EdgeMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  EdgeMap() = default;
  EdgeMap(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0) {}

  std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const;

  GrayImage to_gray() const;
  bool operator==(const EdgeMap&) const = default;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

// Ordered top-left, top-right, bottom-right, bottom-left.
struct QuadCorners {
  std::array<Point2, 4> pts;

  // Shoelace area, positive for the clockwise-on-screen order above.
  double signed_area() const;
  bool is_simple() const;
  bool operator==(const QuadCorners&) const = default;

  static QuadCorners rectangle(double w, double h);
};

// Throws InvalidArgument unless the corners form a simple quad with positive area.
void validate(const QuadCorners& quad);

}  // namespace swire
