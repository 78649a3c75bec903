#include "swire/dataset/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numbers>

#include "swire/imaging/io.hpp"
#include "swire/util/error.hpp"
#include "swire/util/random.hpp"

namespace swire::dataset {

const char* kind_name(ElementKind kind) {
  switch (kind) {
    case ElementKind::topbar: return "topbar";
    case ElementKind::text_row: return "text_row";
    case ElementKind::image_block: return "image_block";
    case ElementKind::button: return "button";
    case ElementKind::list_divider: return "list_divider";
  }
  return "unknown";
}

bool is_well_formed(const SyntheticLayout& layout) {
  const Rect canvas{0, 0, layout.width, layout.height};
  for (std::size_t i = 0; i < layout.elements.size(); ++i) {
    const Rect& a = layout.elements[i].rect;
    if (a.w < 1 || a.h < 1 || !canvas.contains(a)) return false;
    for (std::size_t j = i + 1; j < layout.elements.size(); ++j) {
      const Rect& b = layout.elements[j].rect;
      if (a.overlaps(b) && !a.contains(b) && !b.contains(a)) return false;
    }
  }
  return true;
}

namespace {

int pick(Rng& rng, int lo, int hi) {  // inclusive
  if (hi <= lo) return lo;
  return lo + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(hi - lo + 1)));
}

float shade(Rng& rng, double lo, double hi) { return static_cast<float>(uniform(rng, lo, hi)); }

int aligned_x(Rng& rng, int w, const LayoutConfig& c) {
  const int free = c.width - 2 * c.margin - w;
  switch (uniform_index(rng, 3)) {
    case 0: return c.margin;
    case 1: return c.margin + free / 2;
    default: return c.margin + free;
  }
}

}  // namespace

SyntheticLayout generate_layout(std::uint64_t seed, const LayoutConfig& c) {
  if (c.width < 32 || c.height < 32 || c.margin < 0 || 2 * c.margin + 24 > c.width) {
    throw InvalidArgument("layout canvas too small");
  }
  Rng rng(seed);
  SyntheticLayout layout;
  layout.seed = seed;
  layout.width = c.width;
  layout.height = c.height;
  const int inner = c.width - 2 * c.margin;
  const int bottom = c.height - c.margin;
  int y = c.margin;
  if (uniform01(rng) < 0.8) {
    const int h = pick(rng, 10, 16);
    layout.elements.push_back({ElementKind::topbar, {c.margin, y, inner, h}, shade(rng, 0.2, 0.45)});
    y += h + pick(rng, 3, 6);
  }
  while (true) {
    const double r = uniform01(rng);
    std::vector<Element> row;
    int h = 0;
    if (r < 0.38) {
      h = pick(rng, 4, 7);
      const int x0 = c.margin + pick(rng, 0, 10);
      const int w = pick(rng, std::min(16, c.width - c.margin - x0), c.width - c.margin - x0);
      row.push_back({ElementKind::text_row, {x0, y, w, h}, shade(rng, 0.25, 0.6)});
    } else if (r < 0.66) {
      h = pick(rng, 14, 36);
      if (uniform01(rng) < 0.35) {
        const int w = (inner - 4) / 2;
        row.push_back({ElementKind::image_block, {c.margin, y, w, h}, shade(rng, 0.45, 0.8)});
        row.push_back({ElementKind::image_block, {c.width - c.margin - w, y, w, h}, shade(rng, 0.45, 0.8)});
      } else {
        const int w = pick(rng, 24, inner);
        row.push_back({ElementKind::image_block, {aligned_x(rng, w, c), y, w, h}, shade(rng, 0.45, 0.8)});
      }
    } else if (r < 0.84) {
      h = pick(rng, 9, 13);
      const int w = pick(rng, 22, std::min(50, inner));
      row.push_back({ElementKind::button, {aligned_x(rng, w, c), y, w, h}, shade(rng, 0.3, 0.7)});
    } else {
      h = 1;
      row.push_back({ElementKind::list_divider, {c.margin, y, inner, 1}, shade(rng, 0.55, 0.8)});
    }
    if (y + h > bottom) break;
    layout.elements.insert(layout.elements.end(), row.begin(), row.end());
    y += h + pick(rng, 3, 7);
  }
  return layout;
}

GrayImage render_screenshot(const SyntheticLayout& layout) {
  GrayImage img(layout.width, layout.height, 1.0f);
  for (const auto& e : layout.elements) {
    for (int y = e.rect.y; y < e.rect.y + e.rect.h; ++y) {
      for (int x = e.rect.x; x < e.rect.x + e.rect.w; ++x) img.at(x, y) = e.shade;
    }
  }
  return img;
}

RgbImage render_screenshot_rgb(const SyntheticLayout& layout) {
  RgbImage img(layout.width, layout.height, 1.0f);
  Rng rng(derive_seed(layout.seed, 0x5eed));
  for (const auto& e : layout.elements) {
    const float rgb[3] = {shade(rng, 0.15, 0.9), shade(rng, 0.15, 0.9), shade(rng, 0.15, 0.9)};
    for (int y = e.rect.y; y < e.rect.y + e.rect.h; ++y) {
      for (int x = e.rect.x; x < e.rect.x + e.rect.w; ++x) std::copy(rgb, rgb + 3, img.pixel(x, y));
    }
  }
  return img;
}

namespace {

constexpr double kMaxSegment = 10.0;

// a -> b split into pieces no longer than kMaxSegment; `b` is omitted.
void append_segment(std::vector<Point2>& out, Point2 a, Point2 b) {
  const double len = std::hypot(b.x - a.x, b.y - a.y);
  const int pieces = std::max(1, static_cast<int>(std::ceil(len / kMaxSegment)));
  for (int k = 0; k < pieces; ++k) {
    const double t = static_cast<double>(k) / pieces;
    out.push_back({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)});
  }
}

Polyline line(Point2 a, Point2 b) {
  Polyline p;
  append_segment(p.pts, a, b);
  p.pts.push_back(b);
  return p;
}

Polyline outline(const Rect& r) {
  const double x0 = r.x, y0 = r.y, x1 = r.x + r.w - 1, y1 = r.y + r.h - 1;
  Polyline p;
  p.closed = true;
  append_segment(p.pts, {x0, y0}, {x1, y0});
  append_segment(p.pts, {x1, y0}, {x1, y1});
  append_segment(p.pts, {x1, y1}, {x0, y1});
  append_segment(p.pts, {x0, y1}, {x0, y0});
  return p;
}

Polyline wave(const Rect& r) {
  const double yc = r.y + (r.h - 1) / 2.0;
  const double amp = std::max(1.0, (r.h - 1) / 2.0 - 0.5);
  const double x1 = r.x + r.w - 1;
  Polyline p;
  for (double x = r.x; x < x1; x += 2.0) {
    p.pts.push_back({x, yc + amp * std::sin(2.0 * std::numbers::pi * (x - r.x) / 8.0)});
  }
  p.pts.push_back({x1, yc + amp * std::sin(2.0 * std::numbers::pi * (x1 - r.x) / 8.0)});
  return p;
}

}  // namespace

std::vector<Polyline> sketch_paths(const SyntheticLayout& layout) {
  std::vector<Polyline> paths;
  for (const auto& e : layout.elements) {
    const Rect& r = e.rect;
    const double x0 = r.x, y0 = r.y, x1 = r.x + r.w - 1, y1 = r.y + r.h - 1;
    switch (e.kind) {
      case ElementKind::topbar:
      case ElementKind::button:
        paths.push_back(outline(r));
        break;
      case ElementKind::image_block:
        paths.push_back(outline(r));
        paths.push_back(line({x0, y0}, {x1, y1}));
        paths.push_back(line({x1, y0}, {x0, y1}));
        break;
      case ElementKind::text_row:
        paths.push_back(wave(r));
        break;
      case ElementKind::list_divider:
        paths.push_back(line({x0, (y0 + y1) / 2.0}, {x1, (y0 + y1) / 2.0}));
        break;
    }
  }
  return paths;
}

namespace {

double segment_distance(Point2 p, Point2 a, Point2 b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

void stamp_segment(GrayImage& img, Point2 a, Point2 b, double radius) {
  const int xmin = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - radius)));
  const int xmax = std::min(img.width - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + radius)));
  const int ymin = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - radius)));
  const int ymax = std::min(img.height - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + radius)));
  for (int y = ymin; y <= ymax; ++y) {
    for (int x = xmin; x <= xmax; ++x) {
      if (segment_distance({static_cast<double>(x), static_cast<double>(y)}, a, b) <= radius) img.at(x, y) = 0.0f;
    }
  }
}

}  // namespace

GrayImage render_polylines(const std::vector<Polyline>& paths, int width, int height, double stroke_width) {
  GrayImage img(width, height, 1.0f);
  const double radius = stroke_width / 2.0;
  for (const auto& p : paths) {
    if (p.pts.empty()) continue;
    if (p.pts.size() == 1) stamp_segment(img, p.pts[0], p.pts[0], radius);
    for (std::size_t k = 0; k + 1 < p.pts.size(); ++k) stamp_segment(img, p.pts[k], p.pts[k + 1], radius);
    if (p.closed && p.pts.size() > 2) stamp_segment(img, p.pts.back(), p.pts.front(), radius);
  }
  return img;
}

DesignerStyle designer_style(std::uint64_t corpus_seed, int designer) {
  Rng rng(derive_seed(corpus_seed, 0xd5000 + static_cast<std::uint64_t>(designer)));
  DesignerStyle s;
  s.offset_x = std::clamp(normal(rng, 0.0, 0.6), -1.0, 1.0);
  s.offset_y = std::clamp(normal(rng, 0.0, 0.6), -1.0, 1.0);
  s.stroke_width = uniform(rng, 1.6, 2.4);
  return s;
}

GrayImage render_sketch(const SyntheticLayout& layout, const DesignerStyle& style, std::uint64_t jitter_seed) {
  Rng rng(jitter_seed);
  auto paths = sketch_paths(layout);
  for (auto& p : paths) {
    for (auto& v : p.pts) {
      double dx = style.offset_x + normal(rng, 0.0, style.jitter_sigma);
      double dy = style.offset_y + normal(rng, 0.0, style.jitter_sigma);
      const double len = std::hypot(dx, dy);
      if (len > style.max_displacement) {
        dx *= style.max_displacement / len;
        dy *= style.max_displacement / len;
      }
      v.x += dx;
      v.y += dy;
    }
  }
  return render_polylines(paths, layout.width, layout.height, style.stroke_width);
}

SyntheticPair generate_pair(std::uint64_t seed, const DesignerStyle& style, const LayoutConfig& config) {
  SyntheticPair p;
  p.layout = generate_layout(derive_seed(seed, 0), config);
  p.screenshot = render_screenshot(p.layout);
  p.sketch = render_sketch(p.layout, style, derive_seed(seed, 1));
  return p;
}

namespace {

struct Template {
  int w, h;  // whole paper
  std::array<Point2, 4> paper, sketch, markers;
};

Template paper_template(int sketch_w, int sketch_h, const PhotoConfig& c) {
  const double m = c.margin, g = c.gap, w = sketch_w, h = sketch_h;
  Template t;
  t.w = sketch_w + 2 * c.margin;
  t.h = sketch_h + 2 * c.margin;
  t.paper = {{{0, 0}, {t.w - 1.0, 0}, {t.w - 1.0, t.h - 1.0}, {0, t.h - 1.0}}};
  t.sketch = {{{m, m}, {m + w - 1, m}, {m + w - 1, m + h - 1}, {m, m + h - 1}}};
  t.markers = {{{m - g - 1, m - g - 1}, {m + w + g, m - g - 1}, {m + w + g, m + h + g}, {m - g - 1, m + h + g}}};
  return t;
}

QuadCorners map_quad(const imaging::Homography& h, const std::array<Point2, 4>& pts) {
  QuadCorners q;
  for (int k = 0; k < 4; ++k) q.pts[k] = h.apply(pts[k]);
  return q;
}

}  // namespace

SketchPhoto photograph(const GrayImage& sketch, std::uint64_t seed, const PhotoConfig& c) {
  if (c.margin < c.gap + c.marker || c.scale <= 0.0 || c.max_displacement < 0.0 || c.max_displacement >= 0.5) {
    throw InvalidArgument("photograph: inconsistent photo configuration");
  }
  const Template t = paper_template(sketch.width, sketch.height, c);
  GrayImage paper(t.w, t.h, c.paper);
  for (int y = 0; y < sketch.height; ++y) {
    for (int x = 0; x < sketch.width; ++x) {
      if (sketch.at(x, y) < 0.5f) paper.at(x + c.margin, y + c.margin) = c.ink;
    }
  }
  for (const auto& corner : t.markers) {
    // Each marker extends away from the sketch area from its inner corner.
    const int cx = static_cast<int>(corner.x), cy = static_cast<int>(corner.y);
    const int sx = cx < c.margin ? -1 : 1, sy = cy < c.margin ? -1 : 1;
    for (int j = 0; j < c.marker; ++j) {
      for (int i = 0; i < c.marker; ++i) paper.at(cx + sx * i, cy + sy * j) = c.ink;
    }
  }

  Rng rng(seed);
  const int pw = static_cast<int>(std::lround(t.w * c.scale));
  const int ph = static_cast<int>(std::lround(t.h * c.scale));
  std::array<Point2, 4> dst;
  const double inward_x[4] = {1, -1, -1, 1}, inward_y[4] = {1, 1, -1, -1};
  for (int k = 0; k < 4; ++k) {
    const Point2 base{t.paper[k].x * c.scale + (c.scale - 1.0) / 2.0, t.paper[k].y * c.scale + (c.scale - 1.0) / 2.0};
    dst[k] = {base.x + inward_x[k] * uniform(rng, 0.0, c.max_displacement) * pw,
              base.y + inward_y[k] * uniform(rng, 0.0, c.max_displacement) * ph};
  }
  const auto to_photo = imaging::fit_homography(t.paper, dst);
  SketchPhoto out;
  out.photo = imaging::warp(paper, to_photo.inverse(), pw, ph, 0.8f);
  for (auto& v : out.photo.data) {
    v = std::clamp(v + static_cast<float>(uniform(rng, -c.noise, c.noise)), 0.0f, 1.0f);
  }
  out.sketch_corners = map_quad(to_photo, t.sketch);
  out.marker_corners = map_quad(to_photo, t.markers);
  return out;
}

QuadCorners sketch_corners_from_markers(const QuadCorners& markers, int sketch_w, int sketch_h,
                                        const PhotoConfig& c) {
  validate(markers);
  const Template t = paper_template(sketch_w, sketch_h, c);
  return map_quad(imaging::fit_homography(t.markers, markers.pts), t.sketch);
}

GrayImage postprocess(const GrayImage& photo, const QuadCorners& corners, int out_w, int out_h, float threshold,
                      imaging::WarpModel model) {
  validate(corners);
  return imaging::binarize(imaging::rectify(photo, corners, out_w, out_h, model), threshold);
}

std::string example_id(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ex%04d", i);
  return buf;
}

std::string designer_id(int d) { return "d" + std::to_string(d); }

std::string app_id(int a) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "app%02d", a);
  return buf;
}

int corpus_app(int i, int designers, int apps) {
  const int d = i % designers;
  if (apps < designers) return d % apps;
  const int owned = (apps - d + designers - 1) / designers;
  return d + ((i / designers) % owned) * designers;
}

Manifest generate_corpus(const CorpusConfig& c, const std::filesystem::path& out_dir) {
  if (c.n < 1 || c.designers < 1 || c.apps < 1 || c.trace_length < 1) {
    throw InvalidArgument("generate_corpus: n, designers, apps and trace_length must be positive");
  }
  if (c.n < c.designers || c.n < c.apps) {
    throw InvalidArgument("generate_corpus: n must be at least the number of designers and of apps");
  }
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "screenshots");
  fs::create_directories(out_dir / "sketches");
  if (c.write_raw) fs::create_directories(out_dir / "sketches_raw");

  std::vector<DesignerStyle> styles;
  for (int d = 0; d < c.designers; ++d) styles.push_back(designer_style(c.seed, d));

  Manifest m;
  m.root = out_dir;
  m.pairs.resize(static_cast<std::size_t>(c.n));
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < c.n; ++i) {
    try {
      const std::uint64_t s = derive_seed(c.seed, static_cast<std::uint64_t>(i));
      const int d = i % c.designers;
      const auto pair = generate_pair(s, styles[d], c.layout);
      PairRecord& r = m.pairs[i];
      r.id = example_id(i);
      r.designer = designer_id(d);
      r.app = app_id(corpus_app(i, c.designers, c.apps));
      r.screenshot = fs::path("screenshots") / (r.id + ".png");
      r.sketch = fs::path("sketches") / (r.id + ".png");
      imaging::write_png(pair.screenshot, out_dir / r.screenshot);
      if (c.write_raw) {
        const auto photo = photograph(pair.sketch, derive_seed(s, 2), c.photo);
        r.sketch_raw = fs::path("sketches_raw") / (r.id + ".png");
        r.corners = photo.sketch_corners;
        imaging::write_png(photo.photo, out_dir / *r.sketch_raw);
        imaging::write_png(postprocess(photo.photo, photo.sketch_corners, pair.sketch.width, pair.sketch.height),
                           out_dir / *r.sketch);
      } else {
        imaging::write_png(pair.sketch, out_dir / *r.sketch);
      }
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<int> seen(static_cast<std::size_t>(c.apps), 0);
  for (int i = 0; i < c.n; ++i) {
    const int a = corpus_app(i, c.designers, c.apps);
    const int k = seen[a]++;
    m.pairs[i].trace = index::TraceRef{app_id(a) + "-t" + std::to_string(k / c.trace_length),
                                       static_cast<std::uint32_t>(k % c.trace_length)};
  }
  save_manifest(m, out_dir / "manifest.json");
  return m;
}

}  // namespace swire::dataset
