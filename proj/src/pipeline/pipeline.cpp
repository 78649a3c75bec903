#include "swire/pipeline/pipeline.hpp"

#include <set>

#include "swire/imaging/imaging.hpp"
#include "swire/util/error.hpp"

namespace swire::pipeline {

std::vector<GrayImage> grid_cells(const GrayImage& img, index::GridDims grid) {
  if (grid.rows < 1 || grid.cols < 1) throw InvalidArgument("grid must have at least one cell");
  if (img.width < grid.cols || img.height < grid.rows) {
    throw InvalidArgument("image smaller than the " + std::to_string(grid.rows) + "x" + std::to_string(grid.cols) +
                          " grid");
  }
  std::vector<GrayImage> cells;
  for (int r = 0; r < grid.rows; ++r) {
    const int y0 = r * img.height / grid.rows, y1 = (r + 1) * img.height / grid.rows;
    for (int c = 0; c < grid.cols; ++c) {
      const int x0 = c * img.width / grid.cols, x1 = (c + 1) * img.width / grid.cols;
      cells.push_back(imaging::crop(img, x0, y0, x1 - x0, y1 - y0));
    }
  }
  return cells;
}

Embedding embed_sketch(const encoder::EncoderPair& model, const GrayImage& sketch) {
  return encoder::encode(model.sketch, encoder::preprocess(sketch, model.sketch.config));
}

Embedding embed_screenshot(const encoder::EncoderPair& model, const GrayImage& screenshot) {
  return encoder::encode(model.screenshot, encoder::preprocess(screenshot, model.screenshot.config));
}

trainer::TrainData load_train_data(const dataset::Manifest& manifest, std::span<const dataset::PairRecord> records,
                                   const encoder::EncoderConfig& config, TrainMode mode, index::GridDims grid) {
  trainer::TrainData data;
  for (const auto& r : records) {
    const GrayImage shot = dataset::load_screenshot(manifest, r);
    const GrayImage sketch = dataset::load_sketch(manifest, r, shot.width, shot.height);
    if (mode == TrainMode::full) {
      data.push_back(r.id, encoder::preprocess(sketch, config), encoder::preprocess(shot, config));
      continue;
    }
    const auto sk_cells = grid_cells(sketch, grid);
    const auto sh_cells = grid_cells(shot, grid);
    for (int k = 0; k < grid.cells(); ++k) {
      data.push_back(r.id + "@" + std::to_string(k / grid.cols) + "-" + std::to_string(k % grid.cols),
                     encoder::preprocess(sk_cells[k], config), encoder::preprocess(sh_cells[k], config));
    }
  }
  return data;
}

index::Index build_index(const dataset::Manifest& manifest, std::span<const dataset::PairRecord> records,
                         const Models& models, index::GridDims grid) {
  const auto& full_cfg = models.full.screenshot.config;
  const auto& cell_cfg = models.cell_model().screenshot.config;
  std::vector<index::IndexedItem> items;
  std::vector<Tensor> full_inputs, cell_inputs;
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (!seen.insert(r.id).second) continue;
    const GrayImage shot = dataset::load_screenshot(manifest, r);
    index::IndexedItem item;
    item.id = r.id;
    item.trace = r.trace;
    items.push_back(std::move(item));
    full_inputs.push_back(encoder::preprocess(shot, full_cfg));
    if (grid.cells() > 0) {
      for (const auto& cell : grid_cells(shot, grid)) cell_inputs.push_back(encoder::preprocess(cell, cell_cfg));
    }
  }
  const auto full = encoder::encode_batch(models.full.screenshot, full_inputs);
  const auto cells = encoder::encode_batch(models.cell_model().screenshot, cell_inputs);
  for (std::size_t i = 0; i < items.size(); ++i) {
    items[i].full = full[i];
    if (grid.cells() > 0) {
      const auto per = static_cast<std::size_t>(grid.cells());
      items[i].parts.assign(cells.begin() + i * per, cells.begin() + (i + 1) * per);
    }
  }
  return index::Index::build(std::move(items), grid);
}

std::vector<index::SegmentQuery> segment_query(const Models& models, const GrayImage& sketch, index::GridDims grid,
                                               const std::vector<bool>& mask) {
  if (mask.size() != static_cast<std::size_t>(grid.cells())) {
    throw InvalidArgument("segment mask has " + std::to_string(mask.size()) + " entries, grid needs " +
                          std::to_string(grid.cells()));
  }
  const auto cells = grid_cells(sketch, grid);
  const auto& model = models.cell_model();
  std::vector<index::SegmentQuery> out;
  for (int k = 0; k < grid.cells(); ++k) {
    if (!mask[k]) continue;
    out.push_back({k / grid.cols, k % grid.cols, embed_sketch(model, cells[k])});
  }
  if (out.empty()) throw InvalidArgument("segment mask has no active cell");
  return out;
}

}  // namespace swire::pipeline
