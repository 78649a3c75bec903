#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "swire/dataset/manifest.hpp"
#include "swire/imaging/image.hpp"
#include "swire/imaging/imaging.hpp"

namespace swire::dataset {

enum class ElementKind : std::uint8_t { topbar, text_row, image_block, button, list_divider };
const char* kind_name(ElementKind kind);

// Pixels x .. x+w-1, y .. y+h-1.
struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  bool contains(const Rect& o) const {
    return o.x >= x && o.y >= y && o.x + o.w <= x + w && o.y + o.h <= y + h;
  }
  bool overlaps(const Rect& o) const {
    return x < o.x + o.w && o.x < x + w && y < o.y + o.h && o.y < y + h;
  }
  bool operator==(const Rect&) const = default;
};

struct Element {
  ElementKind kind = ElementKind::text_row;
  Rect rect;
  float shade = 0.5f;
  bool operator==(const Element&) const = default;
};

struct SyntheticLayout {
  std::uint64_t seed = 0;
  int width = 72;
  int height = 128;
  std::vector<Element> elements;
  bool operator==(const SyntheticLayout&) const = default;
};

// Inside the canvas; pairwise disjoint or nested.
bool is_well_formed(const SyntheticLayout& layout);

struct LayoutConfig {
  int width = 72;
  int height = 128;
  int margin = 3;
};

SyntheticLayout generate_layout(std::uint64_t seed, const LayoutConfig& config = {});

// Filled shaded rectangles on white.
GrayImage render_screenshot(const SyntheticLayout& layout);
// Random element hues over the same geometry, for three-channel profiles.
RgbImage render_screenshot_rgb(const SyntheticLayout& layout);

struct Polyline {
  std::vector<Point2> pts;
  bool closed = false;
};

// Undisturbed stroke centrelines: outlines for every element, a cross for
// image blocks, a wave along text rows.
std::vector<Polyline> sketch_paths(const SyntheticLayout& layout);

// How one designer draws.
struct DesignerStyle {
  double offset_x = 0.0;
  double offset_y = 0.0;
  double stroke_width = 2.0;
  double jitter_sigma = 1.5;
  // Vertex displacement (offset plus jitter) is clamped to this length.
  double max_displacement = 1.8;
};

DesignerStyle designer_style(std::uint64_t corpus_seed, int designer);

// Binary sketch: each path vertex displaced by offset + N(0, sigma^2) per
// axis, then stroked with the style's width.
GrayImage render_sketch(const SyntheticLayout& layout, const DesignerStyle& style,
                        std::uint64_t jitter_seed);
GrayImage render_polylines(const std::vector<Polyline>& paths, int width, int height, double stroke_width);

struct SyntheticPair {
  GrayImage screenshot;
  GrayImage sketch;
  SyntheticLayout layout;
};

SyntheticPair generate_pair(std::uint64_t seed, const DesignerStyle& style = {},
                            const LayoutConfig& config = {});

// Paper template: the sketch area surrounded by a white margin with a solid
// dark marker square outside each corner, photographed at `scale` under a
// random perspective.
struct PhotoConfig {
  int margin = 14;
  int marker = 8;
  int gap = 3;
  double scale = 2.0;
  // Maximum inward displacement of each paper corner, as a fraction of size.
  double max_displacement = 0.08;
  float paper = 0.93f;
  float ink = 0.12f;
  float noise = 0.03f;
};

struct SketchPhoto {
  GrayImage photo;
  // Where sketch pixel centres (0,0), (w-1,0), (w-1,h-1), (0,h-1) land.
  QuadCorners sketch_corners;
  // Inner corner pixel of each marker.
  QuadCorners marker_corners;
};

SketchPhoto photograph(const GrayImage& sketch, std::uint64_t seed, const PhotoConfig& config = {});

// Sketch-area corners implied by detected marker inner corners.
QuadCorners sketch_corners_from_markers(const QuadCorners& markers, int sketch_w, int sketch_h,
                                        const PhotoConfig& config = {});

// Rectify the quad onto out_w x out_h, then binarise.
GrayImage postprocess(const GrayImage& photo, const QuadCorners& corners, int out_w, int out_h,
                      float threshold = 0.5f, imaging::WarpModel model = imaging::WarpModel::projective);

struct CorpusConfig {
  int n = 600;
  int designers = 4;
  int apps = 30;
  std::uint64_t seed = 7;
  int trace_length = 4;
  bool write_raw = true;
  LayoutConfig layout;
  PhotoConfig photo;
};

// Writes manifest.json, screenshots/, sketches/ and (with write_raw)
// sketches_raw/ under out_dir. Pair i gets designer i mod designers and an
// app from that designer's own apps (see corpus_app); each app's pairs are
// chunked, in order, into traces.
Manifest generate_corpus(const CorpusConfig& config, const std::filesystem::path& out_dir);

// Apps are dealt to designers round-robin (app a belongs to designer
// a mod designers) and each designer cycles through its own apps, so holding
// out a designer holds out its apps too. With fewer apps than designers,
// designers share apps.
int corpus_app(int i, int designers, int apps);

std::string example_id(int i);
std::string designer_id(int d);
std::string app_id(int a);

}  // namespace swire::dataset
