#include "swire/index/index.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "swire/simd/kernels.hpp"
#include "swire/util/binio.hpp"
#include "swire/util/error.hpp"

namespace swire::index {

namespace {

float squared(const Embedding& a, const Embedding& b) { return simd::squared_l2(a, b); }

RankedResults top_k(RankedResults hits, std::size_t k) {
  if (k < 1) throw InvalidArgument("k must be >= 1");
  std::sort(hits.begin(), hits.end(), ranks_before);
  if (hits.size() > k) hits.resize(k);
  return hits;
}

}  // namespace

std::string flow_window_id(const std::string& trace, std::uint32_t first, std::uint32_t last) {
  return trace + "[" + std::to_string(first) + ".." + std::to_string(last) + "]";
}

Index Index::build(std::vector<IndexedItem> items, GridDims grid) {
  if (grid.rows < 0 || grid.cols < 0 || (grid.rows == 0) != (grid.cols == 0)) {
    throw InvalidArgument("index: invalid part grid " + std::to_string(grid.rows) + "x" +
                          std::to_string(grid.cols));
  }
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].id.empty()) throw InvalidArgument("index: item with empty id");
    if (i > 0 && items[i].id == items[i - 1].id) {
      throw InvalidArgument("index: duplicate item id '" + items[i].id + "'");
    }
    if (!items[i].parts.empty() && items[i].parts.size() != static_cast<std::size_t>(grid.cells())) {
      throw InvalidArgument("index: item '" + items[i].id + "' has " + std::to_string(items[i].parts.size()) +
                            " part embeddings, grid " + std::to_string(grid.rows) + "x" +
                            std::to_string(grid.cols) + " needs " + std::to_string(grid.cells()));
    }
  }
  Index idx;
  idx.items_ = std::move(items);
  idx.grid_ = grid;
  for (std::size_t i = 0; i < idx.items_.size(); ++i) {
    if (const auto& t = idx.items_[i].trace) idx.traces_[t->id].push_back(i);
  }
  for (auto& [id, members] : idx.traces_) {
    std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      return idx.items_[a].trace->position < idx.items_[b].trace->position;
    });
    for (std::size_t j = 1; j < members.size(); ++j) {
      if (idx.items_[members[j]].trace->position == idx.items_[members[j - 1]].trace->position) {
        throw InvalidArgument("index: trace '" + id + "' repeats position " +
                              std::to_string(idx.items_[members[j]].trace->position));
      }
    }
  }
  return idx;
}

bool Index::has_parts() const {
  return grid_.cells() > 0 &&
         std::any_of(items_.begin(), items_.end(), [](const auto& it) { return !it.parts.empty(); });
}

const IndexedItem* Index::find(std::string_view id) const {
  const auto it = std::lower_bound(items_.begin(), items_.end(), id,
                                   [](const IndexedItem& a, std::string_view v) { return a.id < v; });
  return (it != items_.end() && it->id == id) ? &*it : nullptr;
}

std::size_t Index::max_trace_length() const {
  std::size_t best = 0;
  for (const auto& [id, members] : traces_) {
    std::size_t run = 0;
    for (std::size_t j = 0; j < members.size(); ++j) {
      const bool continues =
          j > 0 && items_[members[j]].trace->position == items_[members[j - 1]].trace->position + 1;
      run = continues ? run + 1 : 1;
      best = std::max(best, run);
    }
  }
  return best;
}

RankedResults Index::query_full(const Embedding& query, std::size_t k) const {
  if (items_.empty()) throw InvalidArgument("query on an empty index");
  RankedResults hits;
  hits.reserve(items_.size());
  for (const auto& item : items_) hits.push_back({item.id, std::sqrt(squared(query, item.full))});
  return top_k(std::move(hits), k);
}

RankedResults Index::query_segments(std::span<const SegmentQuery> cells, std::size_t k) const {
  if (items_.empty()) throw InvalidArgument("query on an empty index");
  if (!has_parts()) throw InvalidArgument("segment query: index has no part embeddings");
  if (cells.empty()) throw InvalidArgument("segment query: at least one active cell is required");
  std::set<int> seen;
  for (const auto& c : cells) {
    if (c.row < 0 || c.col < 0 || c.row >= grid_.rows || c.col >= grid_.cols) {
      throw InvalidArgument("segment query: cell (" + std::to_string(c.row) + ", " + std::to_string(c.col) +
                            ") outside the " + std::to_string(grid_.rows) + "x" +
                            std::to_string(grid_.cols) + " grid");
    }
    if (!seen.insert(c.row * grid_.cols + c.col).second) {
      throw InvalidArgument("segment query: cell listed twice");
    }
  }
  RankedResults hits;
  for (const auto& item : items_) {
    if (item.parts.empty()) continue;
    float total = 0.0f;
    for (const auto& c : cells) total += squared(c.embedding, item.parts[c.row * grid_.cols + c.col]);
    hits.push_back({item.id, std::sqrt(total)});
  }
  return top_k(std::move(hits), k);
}

RankedResults Index::query_flow(std::span<const Embedding> seq, std::size_t k) const {
  if (items_.empty()) throw InvalidArgument("query on an empty index");
  if (seq.size() < 2) throw InvalidArgument("flow query: needs at least 2 screens");
  if (max_trace_length() < seq.size()) {
    throw InvalidArgument("flow query: no trace has " + std::to_string(seq.size()) + " screens");
  }
  RankedResults hits;
  for (const auto& [id, members] : traces_) {
    if (members.size() < seq.size()) continue;
    for (std::size_t start = 0; start + seq.size() <= members.size(); ++start) {
      const std::uint32_t first = items_[members[start]].trace->position;
      const std::uint32_t last = items_[members[start + seq.size() - 1]].trace->position;
      // Windows never skip a missing position.
      if (last - first + 1 != seq.size()) continue;
      float total = 0.0f;
      for (std::size_t j = 0; j < seq.size(); ++j) total += squared(seq[j], items_[members[start + j]].full);
      hits.push_back({flow_window_id(id, first, last), std::sqrt(total)});
    }
  }
  return top_k(std::move(hits), k);
}

std::vector<std::string> Index::window_items(std::string_view window_id) const {
  const auto open = window_id.rfind('[');
  const auto dots = window_id.rfind("..");
  if (open == std::string_view::npos || dots == std::string_view::npos || dots < open || window_id.back() != ']') {
    return {};
  }
  const auto it = traces_.find(std::string(window_id.substr(0, open)));
  if (it == traces_.end()) return {};
  std::uint32_t first = 0, last = 0;
  try {
    first = static_cast<std::uint32_t>(std::stoul(std::string(window_id.substr(open + 1, dots - open - 1))));
    last = static_cast<std::uint32_t>(std::stoul(std::string(window_id.substr(dots + 2, window_id.size() - dots - 3))));
  } catch (const std::exception&) {
    return {};
  }
  std::vector<std::string> out;
  for (std::size_t m : it->second) {
    const auto p = items_[m].trace->position;
    if (p >= first && p <= last) out.push_back(items_[m].id);
  }
  return out;
}

namespace {
constexpr std::string_view kMagic = "SWIDX1";
}

std::vector<std::uint8_t> Index::serialize() const {
  binio::Writer w;
  w.bytes(kMagic);
  w.u32(static_cast<std::uint32_t>(grid_.rows));
  w.u32(static_cast<std::uint32_t>(grid_.cols));
  w.u32(static_cast<std::uint32_t>(kEmbeddingDim));
  w.u32(static_cast<std::uint32_t>(items_.size()));
  for (const auto& item : items_) {
    w.str(item.id);
    w.f32s(item.full);
    w.u8(item.parts.empty() ? 0 : 1);
    for (const auto& p : item.parts) w.f32s(p);
    w.u8(item.trace ? 1 : 0);
    if (item.trace) {
      w.str(item.trace->id);
      w.u32(item.trace->position);
    }
  }
  w.seal();
  return w.buffer();
}

void Index::save(const std::filesystem::path& path) const { binio::write_file(path, serialize()); }

Index Index::load(const std::filesystem::path& path) {
  const std::string what = "index " + path.string();
  auto r = binio::Reader::from_file(path);
  r.verify_seal(what);
  r.expect_magic(kMagic, what);
  GridDims grid;
  grid.rows = static_cast<int>(r.u32());
  grid.cols = static_cast<int>(r.u32());
  if (r.u32() != kEmbeddingDim) throw FormatError(what + ": embedding dimension is not 64");
  const std::uint32_t count = r.u32();
  std::vector<IndexedItem> items(count);
  for (auto& item : items) {
    item.id = r.str();
    r.f32s(item.full);
    if (r.u8()) {
      item.parts.resize(static_cast<std::size_t>(grid.cells()));
      for (auto& p : item.parts) r.f32s(p);
    }
    if (r.u8()) {
      TraceRef t;
      t.id = r.str();
      t.position = r.u32();
      item.trace = std::move(t);
    }
  }
  if (!r.at_end()) throw FormatError(what + ": trailing data after items");
  try {
    return build(std::move(items), grid);
  } catch (const InvalidArgument& e) {
    throw FormatError(what + ": " + e.what());
  }
}

std::string Index::fingerprint() const { return binio::seal_hex(serialize()); }

void IndexBuilder::add(IndexedItem item) {
  if (ids_.contains(item.id)) throw InvalidArgument("index: duplicate item id '" + item.id + "'");
  ids_.emplace(item.id, items_.size());
  items_.push_back(std::move(item));
}

Index IndexBuilder::build() const { return Index::build(items_, grid_); }

}  // namespace swire::index
