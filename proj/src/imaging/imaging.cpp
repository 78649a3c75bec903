#include "swire/imaging/imaging.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>

#include "swire/util/error.hpp"

namespace swire::imaging {

GrayImage to_gray(const RgbImage& img) {
  GrayImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const float* p = img.pixel(x, y);
      const float v = 0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2];
      out.at(x, y) = std::clamp(v, 0.0f, 1.0f);
    }
  }
  return out;
}

GrayImage resize(const GrayImage& img, int w, int h) {
  if (w < 1 || h < 1) {
    throw InvalidArgument("resize: target dimensions must be >= 1, got " + std::to_string(w) + "x" +
                          std::to_string(h));
  }
  if (img.empty()) throw InvalidArgument("resize: empty source image");
  if (w == img.width && h == img.height) return img;
  GrayImage out(w, h);
  const double sx = static_cast<double>(img.width) / w;
  const double sy = static_cast<double>(img.height) / h;
  for (int y = 0; y < h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double ty = fy - y0;
    for (int x = 0; x < w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double tx = fx - x0;
      const double top = img.at(x0, y0) * (1 - tx) + img.at(x1, y0) * tx;
      const double bot = img.at(x0, y1) * (1 - tx) + img.at(x1, y1) * tx;
      out.at(x, y) = static_cast<float>(top * (1 - ty) + bot * ty);
    }
  }
  return out;
}

Tensor normalize_signed(const GrayImage& img) {
  std::vector<float> v(img.data.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 2.0f * img.data[i] - 1.0f;
  return Tensor({1, static_cast<std::size_t>(img.height), static_cast<std::size_t>(img.width)},
                std::move(v));
}

GrayImage crop(const GrayImage& img, int x0, int y0, int w, int h) {
  if (w < 1 || h < 1 || x0 < 0 || y0 < 0 || x0 + w > img.width || y0 + h > img.height) {
    throw InvalidArgument("crop: region outside image");
  }
  GrayImage out(w, h);
  for (int y = 0; y < h; ++y) {
    std::copy_n(&img.data[static_cast<std::size_t>(y0 + y) * img.width + x0], w,
                &out.data[static_cast<std::size_t>(y) * w]);
  }
  return out;
}

namespace {

std::vector<double> gaussian_blur(const GrayImage& img, double sigma) {
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * r + 1);
  double total = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    total += k[i + r];
  }
  for (auto& v : k) v /= total;
  const int w = img.width;
  const int h = img.height;
  std::vector<double> tmp(static_cast<std::size_t>(w) * h);
  std::vector<double> out(tmp.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = -r; i <= r; ++i) s += k[i + r] * img.at_clamped(x + i, y);
      tmp[static_cast<std::size_t>(y) * w + x] = s;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = -r; i <= r; ++i) {
        const int yy = std::clamp(y + i, 0, h - 1);
        s += k[i + r] * tmp[static_cast<std::size_t>(yy) * w + x];
      }
      out[static_cast<std::size_t>(y) * w + x] = s;
    }
  }
  return out;
}

struct Gradients {
  std::vector<double> gx, gy, mag;
};

Gradients sobel(const std::vector<double>& s, int w, int h) {
  Gradients g;
  g.gx.resize(s.size());
  g.gy.resize(s.size());
  g.mag.resize(s.size());
  auto at = [&](int x, int y) {
    return s[static_cast<std::size_t>(std::clamp(y, 0, h - 1)) * w + std::clamp(x, 0, w - 1)];
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = (at(x + 1, y - 1) + 2 * at(x + 1, y) + at(x + 1, y + 1)) -
                        (at(x - 1, y - 1) + 2 * at(x - 1, y) + at(x - 1, y + 1));
      const double gy = (at(x - 1, y + 1) + 2 * at(x, y + 1) + at(x + 1, y + 1)) -
                        (at(x - 1, y - 1) + 2 * at(x, y - 1) + at(x + 1, y - 1));
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      g.gx[i] = gx;
      g.gy[i] = gy;
      g.mag[i] = std::hypot(gx, gy);
    }
  }
  return g;
}

}  // namespace

std::vector<double> sobel_magnitude(const GrayImage& img, double sigma) {
  return sobel(gaussian_blur(img, sigma), img.width, img.height).mag;
}

EdgeMap canny(const GrayImage& img, const CannyParams& params) {
  if (!(params.sigma > 0.0)) throw InvalidArgument("canny: sigma must be > 0");
  if (!(params.low > 0.0 && params.low < params.high && params.high <= 1.0)) {
    throw InvalidArgument("canny: thresholds must satisfy 0 < low < high <= 1");
  }
  if (img.empty()) throw InvalidArgument("canny: empty image");
  const int w = img.width;
  const int h = img.height;
  const Gradients g = sobel(gaussian_blur(img, params.sigma), w, h);
  EdgeMap edges(w, h);
  const double max_mag = *std::max_element(g.mag.begin(), g.mag.end());
  if (max_mag <= 0.0) return edges;
  const double hi = params.high * max_mag;
  const double lo = params.low * max_mag;

  auto mag_at = [&](int x, int y) {
    if (x < 0 || y < 0 || x >= w || y >= h) return 0.0;
    return g.mag[static_cast<std::size_t>(y) * w + x];
  };

  // Non-maximum suppression across the gradient direction, quantised to
  // 0/45/90/135 degrees. A pixel must beat the neighbour ahead strictly and
  // tie-or-beat the one behind, so plateaus of equal magnitude keep one pixel.
  std::vector<double> thin(g.mag.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const double m = g.mag[i];
      if (m < lo) continue;
      double angle = std::atan2(g.gy[i], g.gx[i]) * 180.0 / std::numbers::pi;
      if (angle < 0) angle += 180.0;
      int dx, dy;
      if (angle < 22.5 || angle >= 157.5) {
        dx = 1, dy = 0;
      } else if (angle < 67.5) {
        dx = 1, dy = 1;
      } else if (angle < 112.5) {
        dx = 0, dy = 1;
      } else {
        dx = -1, dy = 1;
      }
      const double ahead = mag_at(x + dx, y + dy);
      const double behind = mag_at(x - dx, y - dy);
      if (m > ahead && m >= behind) thin[i] = m;
    }
  }

  // Hysteresis: grow from strong pixels through 8-connected weak ones.
  std::deque<std::pair<int, int>> queue;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (thin[static_cast<std::size_t>(y) * w + x] >= hi) {
        edges.at(x, y) = 1;
        queue.emplace_back(x, y);
      }
    }
  }
  while (!queue.empty()) {
    const auto [x, y] = queue.front();
    queue.pop_front();
    for (int oy = -1; oy <= 1; ++oy) {
      for (int ox = -1; ox <= 1; ++ox) {
        const int nx = x + ox;
        const int ny = y + oy;
        if (nx < 0 || ny < 0 || nx >= w || ny >= h || edges.at(nx, ny)) continue;
        if (thin[static_cast<std::size_t>(ny) * w + nx] >= lo) {
          edges.at(nx, ny) = 1;
          queue.emplace_back(nx, ny);
        }
      }
    }
  }
  return edges;
}

Point2 Homography::apply(Point2 p) const {
  const double w = m[6] * p.x + m[7] * p.y + m[8];
  return {(m[0] * p.x + m[1] * p.y + m[2]) / w, (m[3] * p.x + m[4] * p.y + m[5]) / w};
}

Homography Homography::inverse() const {
  Eigen::Matrix3d a;
  a << m[0], m[1], m[2], m[3], m[4], m[5], m[6], m[7], m[8];
  const Eigen::Matrix3d inv = a.inverse();
  Homography out;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out.m[r * 3 + c] = inv(r, c) / inv(2, 2);
  }
  return out;
}

Homography Homography::operator*(const Homography& rhs) const {
  Homography out;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += m[r * 3 + k] * rhs.m[k * 3 + c];
      out.m[r * 3 + c] = s;
    }
  }
  const double n = out.m[8];
  for (auto& v : out.m) v /= n;
  return out;
}

Homography fit_homography(const std::array<Point2, 4>& src, const std::array<Point2, 4>& dst,
                          WarpModel model) {
  validate(QuadCorners{src});
  validate(QuadCorners{dst});
  Homography hm;
  if (model == WarpModel::projective) {
    Eigen::Matrix<double, 8, 8> a;
    Eigen::Matrix<double, 8, 1> b;
    for (int i = 0; i < 4; ++i) {
      const double x = src[i].x, y = src[i].y, u = dst[i].x, v = dst[i].y;
      a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
      a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
      b(2 * i) = u;
      b(2 * i + 1) = v;
    }
    const auto qr = a.colPivHouseholderQr();
    if (qr.rank() < 8) throw InvalidArgument("degenerate (collinear) corners");
    const Eigen::Matrix<double, 8, 1> h = qr.solve(b);
    for (int i = 0; i < 8; ++i) hm.m[i] = h(i);
    hm.m[8] = 1.0;
  } else {
    Eigen::Matrix<double, 8, 6> a = Eigen::Matrix<double, 8, 6>::Zero();
    Eigen::Matrix<double, 8, 1> b;
    for (int i = 0; i < 4; ++i) {
      a.row(2 * i) << src[i].x, src[i].y, 1, 0, 0, 0;
      a.row(2 * i + 1) << 0, 0, 0, src[i].x, src[i].y, 1;
      b(2 * i) = dst[i].x;
      b(2 * i + 1) = dst[i].y;
    }
    const Eigen::Matrix<double, 6, 1> h = a.colPivHouseholderQr().solve(b);
    hm.m = {h(0), h(1), h(2), h(3), h(4), h(5), 0.0, 0.0, 1.0};
  }
  for (const double v : hm.m) {
    if (!std::isfinite(v)) throw InvalidArgument("degenerate (collinear) corners");
  }
  return hm;
}

GrayImage warp(const GrayImage& img, const Homography& out_to_src, int out_w, int out_h, float fill) {
  if (out_w < 1 || out_h < 1) throw InvalidArgument("warp: output dimensions must be >= 1");
  GrayImage out(out_w, out_h, fill);
  const double max_x = img.width - 1;
  const double max_y = img.height - 1;
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const Point2 p = out_to_src.apply({static_cast<double>(x), static_cast<double>(y)});
      if (!(p.x >= -0.5 && p.y >= -0.5 && p.x <= max_x + 0.5 && p.y <= max_y + 0.5)) continue;
      const double fx = std::clamp(p.x, 0.0, max_x);
      const double fy = std::clamp(p.y, 0.0, max_y);
      const int x0 = static_cast<int>(fx);
      const int y0 = static_cast<int>(fy);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const int y1 = std::min(y0 + 1, img.height - 1);
      const double tx = fx - x0;
      const double ty = fy - y0;
      const double top = img.at(x0, y0) * (1 - tx) + img.at(x1, y0) * tx;
      const double bot = img.at(x0, y1) * (1 - tx) + img.at(x1, y1) * tx;
      out.at(x, y) = static_cast<float>(top * (1 - ty) + bot * ty);
    }
  }
  return out;
}

GrayImage rectify(const GrayImage& img, const QuadCorners& src, int dst_w, int dst_h, WarpModel model) {
  if (dst_w < 2 || dst_h < 2) throw InvalidArgument("rectify: output must be at least 2x2");
  validate(src);
  const QuadCorners dst = QuadCorners::rectangle(dst_w - 1, dst_h - 1);
  const Homography out_to_src = fit_homography(dst.pts, src.pts, model);
  return warp(img, out_to_src, dst_w, dst_h, 1.0f);
}

GrayImage binarize(const GrayImage& img, float thresh) {
  if (!(thresh >= 0.0f && thresh <= 1.0f)) throw InvalidArgument("binarize: threshold must be in [0, 1]");
  GrayImage out(img.width, img.height);
  for (std::size_t i = 0; i < img.data.size(); ++i) out.data[i] = img.data[i] < thresh ? 0.0f : 1.0f;
  return out;
}

std::optional<QuadCorners> detect_frame_corners(const GrayImage& photo, float dark_thresh) {
  const int w = photo.width;
  const int h = photo.height;
  if (w < 8 || h < 8) return std::nullopt;
  std::vector<int> label(static_cast<std::size_t>(w) * h, -1);
  struct Blob {
    std::vector<std::pair<int, int>> px;
    int min_x, min_y, max_x, max_y;
  };
  std::vector<Blob> blobs;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (label[i] >= 0 || photo.data[i] >= dark_thresh) continue;
      Blob blob{{}, x, y, x, y};
      const int id = static_cast<int>(blobs.size());
      std::deque<std::pair<int, int>> q{{x, y}};
      label[i] = id;
      while (!q.empty()) {
        const auto [cx, cy] = q.front();
        q.pop_front();
        blob.px.emplace_back(cx, cy);
        blob.min_x = std::min(blob.min_x, cx);
        blob.max_x = std::max(blob.max_x, cx);
        blob.min_y = std::min(blob.min_y, cy);
        blob.max_y = std::max(blob.max_y, cy);
        constexpr int nbr[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
        for (const auto& d : nbr) {
          const int nx = cx + d[0];
          const int ny = cy + d[1];
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const std::size_t j = static_cast<std::size_t>(ny) * w + nx;
          if (label[j] < 0 && photo.data[j] < dark_thresh) {
            label[j] = id;
            q.emplace_back(nx, ny);
          }
        }
      }
      blobs.push_back(std::move(blob));
    }
  }
  // Markers are solid, roughly square and not tiny.
  const double min_area = std::max(9.0, 1e-4 * w * h);
  std::vector<const Blob*> markers;
  for (const auto& b : blobs) {
    const double bw = b.max_x - b.min_x + 1;
    const double bh = b.max_y - b.min_y + 1;
    const double fill = static_cast<double>(b.px.size()) / (bw * bh);
    const double aspect = std::max(bw, bh) / std::min(bw, bh);
    if (b.px.size() >= min_area && fill > 0.6 && aspect < 2.0) markers.push_back(&b);
  }
  if (markers.size() < 4) return std::nullopt;

  const std::array<Point2, 4> image_corners{
      Point2{0, 0}, Point2{static_cast<double>(w - 1), 0},
      Point2{static_cast<double>(w - 1), static_cast<double>(h - 1)},
      Point2{0, static_cast<double>(h - 1)}};
  std::array<const Blob*, 4> chosen{};
  std::array<Point2, 4> centroids{};
  for (int c = 0; c < 4; ++c) {
    double best = 1e300;
    for (const Blob* b : markers) {
      double sx = 0, sy = 0;
      for (const auto& [px, py] : b->px) sx += px, sy += py;
      const Point2 cen{sx / b->px.size(), sy / b->px.size()};
      const double d = std::hypot(cen.x - image_corners[c].x, cen.y - image_corners[c].y);
      if (d < best) {
        best = d;
        chosen[c] = b;
        centroids[c] = cen;
      }
    }
  }
  for (int a = 0; a < 4; ++a) {
    for (int b = a + 1; b < 4; ++b) {
      if (chosen[a] == chosen[b]) return std::nullopt;
    }
  }
  // Inner corner of each marker: its pixel nearest the centre of the four.
  Point2 centre{0, 0};
  for (const auto& c : centroids) centre.x += c.x / 4, centre.y += c.y / 4;
  QuadCorners quad;
  for (int c = 0; c < 4; ++c) {
    double best = 1e300;
    for (const auto& [px, py] : chosen[c]->px) {
      const double d = std::hypot(px - centre.x, py - centre.y);
      if (d < best) {
        best = d;
        quad.pts[c] = {static_cast<double>(px), static_cast<double>(py)};
      }
    }
  }
  try {
    validate(quad);
  } catch (const InvalidArgument&) {
    return std::nullopt;
  }
  return quad;
}

}  // namespace swire::imaging
