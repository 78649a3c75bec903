#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "swire/dataset/manifest.hpp"
#include "swire/encoder/encoder.hpp"
#include "swire/imaging/image.hpp"
#include "swire/index/index.hpp"
#include "swire/trainer/trainer.hpp"

// Glue between manifests, encoders and the index, shared by the CLI, the
// HTTP service and the evaluation harness so all of them embed identically.
namespace swire::pipeline {

inline constexpr index::GridDims kDefaultGrid{3, 3};

// Cell (r, c) spans columns [c*W/cols, (c+1)*W/cols) and likewise for rows.
// Row-major.
std::vector<GrayImage> grid_cells(const GrayImage& img, index::GridDims grid);

struct Models {
  encoder::EncoderPair full;
  // Encodes cell crops; the full model is used when absent.
  std::optional<encoder::EncoderPair> segments;

  const encoder::EncoderPair& cell_model() const { return segments ? *segments : full; }
};

Embedding embed_sketch(const encoder::EncoderPair& model, const GrayImage& sketch);
Embedding embed_screenshot(const encoder::EncoderPair& model, const GrayImage& screenshot);

enum class TrainMode { full, cells };

// Training tensors for `records`. In cells mode every record contributes one
// example per grid cell, identified as "<id>@<row>-<col>".
trainer::TrainData load_train_data(const dataset::Manifest& manifest, std::span<const dataset::PairRecord> records,
                                   const encoder::EncoderConfig& config, TrainMode mode = TrainMode::full,
                                   index::GridDims grid = kDefaultGrid);

// One item per distinct example id; parts are filled when grid is nonzero.
index::Index build_index(const dataset::Manifest& manifest, std::span<const dataset::PairRecord> records,
                         const Models& models, index::GridDims grid = kDefaultGrid);

// Cell embeddings of a sketch for the active cells of a row-major mask.
std::vector<index::SegmentQuery> segment_query(const Models& models, const GrayImage& sketch,
                                               index::GridDims grid, const std::vector<bool>& mask);

}  // namespace swire::pipeline
