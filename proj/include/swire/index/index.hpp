#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "swire/encoder/encoder.hpp"
#include "swire/index/ranked.hpp"

namespace swire::index {

struct TraceRef {
  std::string id;
  std::uint32_t position = 0;
  bool operator==(const TraceRef&) const = default;
};

struct GridDims {
  int rows = 0;
  int cols = 0;
  int cells() const { return rows * cols; }
  bool operator==(const GridDims&) const = default;
};

struct IndexedItem {
  std::string id;
  Embedding full{};
  // rows * cols cell embeddings, row-major; empty when the item has none.
  std::vector<Embedding> parts;
  std::optional<TraceRef> trace;

  bool operator==(const IndexedItem&) const = default;
};

struct SegmentQuery {
  int row = 0;
  int col = 0;
  Embedding embedding{};
};

// Immutable snapshot of embeddings with exact nearest-neighbour ranking.
// Items are held in id order so results never depend on insertion order.
class Index {
 public:
  Index() = default;

  // Throws InvalidArgument on duplicate ids or on part grids that do not
  // match `grid`.
  static Index build(std::vector<IndexedItem> items, GridDims grid = {});

  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  GridDims grid() const { return grid_; }
  bool has_parts() const;
  const std::vector<IndexedItem>& items() const { return items_; }
  const IndexedItem* find(std::string_view id) const;
  // Longest run of consecutive positions in any trace.
  std::size_t max_trace_length() const;

  RankedResults query_full(const Embedding& query, std::size_t k) const;

  // Distance over the active cells only: the norm of the concatenated
  // per-cell differences. Unspecified cells play no part.
  RankedResults query_segments(std::span<const SegmentQuery> cells, std::size_t k) const;

  // Candidates are runs of |seq| consecutive positions within a
  // trace, identified as "<trace>[<first>..<last>]". Order matters.
  RankedResults query_flow(std::span<const Embedding> seq, std::size_t k) const;

  // Item ids of a window returned by query_flow; empty if unknown.
  std::vector<std::string> window_items(std::string_view window_id) const;

  std::vector<std::uint8_t> serialize() const;
  void save(const std::filesystem::path& path) const;
  static Index load(const std::filesystem::path& path);
  std::string fingerprint() const;

 private:
  std::vector<IndexedItem> items_;
  GridDims grid_;
  // trace id -> item positions in items_, sorted by trace position.
  std::map<std::string, std::vector<std::size_t>> traces_;
};

class IndexBuilder {
 public:
  explicit IndexBuilder(GridDims grid = {}) : grid_(grid) {}
  // Throws InvalidArgument if the id is already present.
  void add(IndexedItem item);
  std::size_t size() const { return items_.size(); }
  Index build() const;

 private:
  GridDims grid_;
  std::vector<IndexedItem> items_;
  std::map<std::string, std::size_t, std::less<>> ids_;
};

std::string flow_window_id(const std::string& trace, std::uint32_t first, std::uint32_t last);

}  // namespace swire::index
