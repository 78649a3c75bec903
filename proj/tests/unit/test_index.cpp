#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>

#include "swire/index/index.hpp"
#include "swire/util/binio.hpp"
#include "swire/util/error.hpp"
#include "swire/util/random.hpp"

using namespace swire;
using namespace swire::index;

namespace {

Embedding random_embedding(Rng& rng) {
  Embedding e{};
  for (auto& v : e) v = static_cast<float>(uniform(rng, -1.0, 1.0));
  return e;
}

Embedding constant(float v) {
  Embedding e{};
  e.fill(v);
  return e;
}

double dist2(const Embedding& a, const Embedding& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
  return s;
}

struct OracleHit {
  std::string id;
  double distance;
};

std::vector<OracleHit> oracle_sort(std::vector<OracleHit> hits, std::size_t k) {
  std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
  });
  if (hits.size() > k) hits.resize(k);
  return hits;
}

void check_matches(const RankedResults& got, const std::vector<OracleHit>& want) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i].id == want[i].id);
    CHECK(got[i].distance == doctest::Approx(want[i].distance).epsilon(1e-5));
  }
}

std::vector<IndexedItem> random_items(Rng& rng, std::size_t n, GridDims grid = {}) {
  std::vector<IndexedItem> items;
  for (std::size_t i = 0; i < n; ++i) {
    IndexedItem it;
    it.id = "item" + std::to_string(i);
    it.full = random_embedding(rng);
    for (int c = 0; c < grid.cells(); ++c) it.parts.push_back(random_embedding(rng));
    items.push_back(std::move(it));
  }
  return items;
}

// Five traces of uneven length; trace t has 3 + t screens.
std::vector<IndexedItem> trace_items(Rng& rng) {
  std::vector<IndexedItem> items;
  for (int t = 0; t < 5; ++t) {
    for (int p = 0; p < 3 + t; ++p) {
      IndexedItem it;
      it.id = "t" + std::to_string(t) + "s" + std::to_string(p);
      it.full = random_embedding(rng);
      it.trace = TraceRef{"trace" + std::to_string(t), static_cast<std::uint32_t>(p)};
      items.push_back(std::move(it));
    }
  }
  return items;
}

}  // namespace

TEST_CASE("query_full: exact match first at distance zero, near before far") {
  std::vector<IndexedItem> items{{"far", constant(0.0f), {}, {}}, {"near", constant(0.0f), {}, {}}};
  items[0].full[0] = 2.0f;
  items[1].full[0] = 1.0f;
  const auto idx = Index::build(items);
  const auto r = idx.query_full(constant(0.0f), 10);
  REQUIRE(r.size() == 2u);
  CHECK(r[0].id == "near");
  CHECK(r[0].distance == 1.0f);
  CHECK(r[1].distance == 2.0f);
  const auto self = idx.query_full(items[0].full, 1);
  CHECK(self[0].id == "far");
  CHECK(self[0].distance == 0.0f);
}

TEST_CASE("query_full matches an exhaustive-sort oracle") {
  Rng rng(21);
  for (int corpus = 0; corpus < 5; ++corpus) {
    const auto items = random_items(rng, 100);
    const auto idx = Index::build(items);
    for (int q = 0; q < 50; ++q) {
      const auto query = random_embedding(rng);
      std::vector<OracleHit> all;
      for (const auto& it : items) all.push_back({it.id, std::sqrt(dist2(query, it.full))});
      for (const std::size_t k : {1u, 10u, 100u, 250u}) check_matches(idx.query_full(query, k), oracle_sort(all, k));
    }
  }
}

TEST_CASE("ties are broken by ascending id") {
  std::vector<IndexedItem> items;
  for (const char* id : {"c", "a", "b"}) items.push_back({id, constant(0.5f), {}, {}});
  const auto r = Index::build(items).query_full(constant(0.0f), 3);
  CHECK(r[0].id == "a");
  CHECK(r[1].id == "b");
  CHECK(r[2].id == "c");
}

TEST_CASE("results are stable under insertion order") {
  Rng rng(5);
  auto items = random_items(rng, 40, {2, 2});
  const auto a = Index::build(items, {2, 2});
  std::mt19937 shuffle_rng(3);
  std::shuffle(items.begin(), items.end(), shuffle_rng);
  const auto b = Index::build(items, {2, 2});
  const auto q = random_embedding(rng);
  CHECK(a.query_full(q, 40) == b.query_full(q, 40));
  const SegmentQuery cell{1, 0, q};
  CHECK(a.query_segments(std::span(&cell, 1), 40) == b.query_segments(std::span(&cell, 1), 40));
  CHECK(a.serialize() == b.serialize());
}

TEST_CASE("query_segments: one active cell equal to an item's cell ranks it first") {
  Rng rng(8);
  const auto items = random_items(rng, 20, {3, 3});
  const auto idx = Index::build(items, {3, 3});
  const SegmentQuery cell{1, 2, items[7].parts[1 * 3 + 2]};
  const auto r = idx.query_segments(std::span(&cell, 1), 3);
  CHECK(r[0].id == "item7");
  CHECK(r[0].distance == 0.0f);
}

TEST_CASE("query_segments: two cells sum their squared distances") {
  Rng rng(9);
  const auto items = random_items(rng, 10, {3, 3});
  const auto idx = Index::build(items, {3, 3});
  const std::vector<SegmentQuery> cells{{0, 0, random_embedding(rng)}, {2, 1, random_embedding(rng)}};
  for (const auto& hit : idx.query_segments(cells, 10)) {
    const auto* it = idx.find(hit.id);
    const double want = dist2(cells[0].embedding, it->parts[0]) + dist2(cells[1].embedding, it->parts[7]);
    CHECK(double(hit.distance) * hit.distance == doctest::Approx(want).epsilon(1e-5));
  }
}

TEST_CASE("query_segments matches a brute-force oracle over random masks") {
  Rng rng(22);
  const GridDims grid{3, 3};
  for (int corpus = 0; corpus < 3; ++corpus) {
    const auto items = random_items(rng, 100, grid);
    const auto idx = Index::build(items, grid);
    for (int q = 0; q < 50; ++q) {
      std::vector<SegmentQuery> cells;
      for (int c = 0; c < 9; ++c) {
        if (uniform01(rng) < 0.4) cells.push_back({c / 3, c % 3, random_embedding(rng)});
      }
      if (cells.empty()) cells.push_back({1, 1, random_embedding(rng)});
      std::vector<OracleHit> all;
      for (const auto& it : items) {
        double s = 0;
        for (const auto& c : cells) s += dist2(c.embedding, it.parts[c.row * 3 + c.col]);
        all.push_back({it.id, std::sqrt(s)});
      }
      check_matches(idx.query_segments(cells, 10), oracle_sort(all, 10));
    }
  }
}

TEST_CASE("constructed 3-item corpus: a single active cell flips the winner") {
  // X matches the query exactly in cell (0,0) and is off by 3 in every
  // coordinate of the other cells; Y and Z are off by 1 everywhere.
  const GridDims grid{2, 2};
  const Embedding q = constant(0.0f);
  auto make = [&](const std::string& id, float first, float rest) {
    IndexedItem it{id, constant(0.0f), {constant(first), constant(rest), constant(rest), constant(rest)}, {}};
    return it;
  };
  const auto idx = Index::build({make("X", 0.0f, 3.0f), make("Y", 1.0f, 1.0f), make("Z", -1.0f, 1.0f)}, grid);
  const SegmentQuery one{0, 0, q};
  const auto single = idx.query_segments(std::span(&one, 1), 3);
  CHECK(single[0].id == "X");
  CHECK(single[0].distance == 0.0f);
  // By hand: Y and Z are at sqrt(64) = 8 on one cell.
  CHECK(single[1].distance == doctest::Approx(8.0));
  std::vector<SegmentQuery> all;
  for (int c = 0; c < 4; ++c) all.push_back({c / 2, c % 2, q});
  const auto full = idx.query_segments(all, 3);
  // X: sqrt(3 * 64 * 9) = 41.57; Y and Z: sqrt(4 * 64) = 16.
  CHECK(full[0].id != "X");
  CHECK(full[2].id == "X");
  CHECK(full[0].distance == doctest::Approx(16.0));
  CHECK(full[2].distance == doctest::Approx(std::sqrt(3.0 * 64 * 9)));
}

TEST_CASE("query_segments with a 1x1 grid and every cell active equals query_full") {
  Rng rng(10);
  auto items = random_items(rng, 30, {1, 1});
  for (auto& it : items) it.parts[0] = it.full;
  const auto idx = Index::build(items, {1, 1});
  for (int q = 0; q < 10; ++q) {
    const SegmentQuery cell{0, 0, random_embedding(rng)};
    CHECK(idx.query_segments(std::span(&cell, 1), 30) == idx.query_full(cell.embedding, 30));
  }
}

TEST_CASE("query_segments errors") {
  Rng rng(11);
  const auto plain = Index::build(random_items(rng, 3));
  const SegmentQuery cell{0, 0, constant(0.0f)};
  CHECK_THROWS_AS(plain.query_segments(std::span(&cell, 1), 1), InvalidArgument);
  const auto gridded = Index::build(random_items(rng, 3, {3, 3}), {3, 3});
  const SegmentQuery outside{3, 0, constant(0.0f)};
  CHECK_THROWS_AS(gridded.query_segments(std::span(&outside, 1), 1), InvalidArgument);
  CHECK_THROWS_AS(gridded.query_segments(std::span<const SegmentQuery>(), 1), InvalidArgument);
  const std::vector<SegmentQuery> twice{cell, cell};
  CHECK_THROWS_AS(gridded.query_segments(twice, 1), InvalidArgument);
}

TEST_CASE("query_flow: an exact window is first at distance zero") {
  Rng rng(12);
  const auto items = trace_items(rng);
  const auto idx = Index::build(items);
  const IndexedItem* s3 = idx.find("t3s3");
  const IndexedItem* s4 = idx.find("t3s4");
  const std::vector<Embedding> seq{s3->full, s4->full};
  const auto r = idx.query_flow(seq, 5);
  CHECK(r[0].id == "trace3[3..4]");
  CHECK(r[0].distance == 0.0f);
  CHECK(idx.window_items(r[0].id) == std::vector<std::string>{"t3s3", "t3s4"});
  // Order matters: the reversed sequence does not match exactly.
  const std::vector<Embedding> reversed{s4->full, s3->full};
  CHECK(idx.query_flow(reversed, 1)[0].distance > 0.0f);
}

TEST_CASE("query_flow matches a brute-force enumeration of all windows") {
  Rng rng(23);
  for (int corpus = 0; corpus < 10; ++corpus) {
    const auto items = trace_items(rng);
    const auto idx = Index::build(items);
    std::map<std::string, std::vector<const IndexedItem*>> traces;
    for (const auto& it : items) traces[it.trace->id].push_back(&it);
    for (int q = 0; q < 50; ++q) {
      const std::size_t len = 2 + uniform_index(rng, 6);
      std::vector<Embedding> seq;
      for (std::size_t j = 0; j < len; ++j) seq.push_back(random_embedding(rng));
      std::vector<OracleHit> all;
      for (const auto& [id, screens] : traces) {
        for (std::size_t s = 0; s + len <= screens.size(); ++s) {
          double total = 0;
          for (std::size_t j = 0; j < len; ++j) total += dist2(seq[j], screens[s + j]->full);
          all.push_back({flow_window_id(id, static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s + len - 1)),
                         std::sqrt(total)});
        }
      }
      check_matches(idx.query_flow(seq, 10), oracle_sort(all, 10));
    }
  }
}

TEST_CASE("query_flow errors and gaps") {
  Rng rng(13);
  const auto idx = Index::build(trace_items(rng));
  CHECK(idx.max_trace_length() == 7u);
  const std::vector<Embedding> one{constant(0.0f)};
  CHECK_THROWS_AS(idx.query_flow(one, 1), InvalidArgument);
  const std::vector<Embedding> eight(8, constant(0.0f));
  CHECK_THROWS_AS(idx.query_flow(eight, 1), InvalidArgument);
  // A trace with a missing position yields no window across the gap.
  std::vector<IndexedItem> gap;
  for (const std::uint32_t p : {0u, 1u, 3u}) {
    gap.push_back({"g" + std::to_string(p), constant(0.0f), {}, TraceRef{"g", p}});
  }
  const auto g = Index::build(gap);
  CHECK(g.max_trace_length() == 2u);
  const auto r = g.query_flow(std::vector<Embedding>(2, constant(0.0f)), 10);
  REQUIRE(r.size() == 1u);
  CHECK(r[0].id == "g[0..1]");
}

TEST_CASE("distances behave as metrics") {
  Rng rng(14);
  for (int t = 0; t < 100; ++t) {
    const Embedding a = random_embedding(rng), b = random_embedding(rng), c = random_embedding(rng);
    const auto idx = Index::build({{"b", b, {}, {}}, {"c", c, {}, {}}});
    const auto from_a = idx.query_full(a, 2);
    const auto ab = Index::build({{"a", a, {}, {}}}).query_full(b, 1)[0].distance;
    const auto ba = Index::build({{"b", b, {}, {}}}).query_full(a, 1)[0].distance;
    const auto bc = Index::build({{"c", c, {}, {}}}).query_full(b, 1)[0].distance;
    const auto ac = Index::build({{"c", c, {}, {}}}).query_full(a, 1)[0].distance;
    CHECK(ab == ba);
    CHECK(ac <= ab + bc + 1e-5f);
    CHECK(from_a[0].distance <= from_a[1].distance);
    CHECK(ab == doctest::Approx(std::sqrt(dist2(a, b))).epsilon(1e-5));
  }
}

TEST_CASE("build rejects duplicates and mismatched grids") {
  CHECK_THROWS_AS(Index::build({{"a", constant(0), {}, {}}, {"a", constant(1), {}, {}}}), InvalidArgument);
  CHECK_THROWS_AS(Index::build({{"a", constant(0), {constant(0)}, {}}}, {3, 3}), InvalidArgument);
  CHECK_THROWS_AS(Index::build({}, {0, 3}), InvalidArgument);
  IndexBuilder b;
  b.add({"x", constant(0), {}, {}});
  CHECK_THROWS_AS(b.add({"x", constant(1), {}, {}}), InvalidArgument);
  CHECK(b.build().size() == 1u);
}

TEST_CASE("empty index: queries error, save succeeds") {
  const Index empty = Index::build({});
  CHECK_THROWS_AS(empty.query_full(constant(0), 1), InvalidArgument);
  const auto path = std::filesystem::temp_directory_path() / "swire_empty.swidx";
  CHECK_NOTHROW(empty.save(path));
  CHECK(Index::load(path).size() == 0u);
  std::filesystem::remove(path);
}

TEST_CASE("save and load round-trip exactly") {
  Rng rng(15);
  auto items = random_items(rng, 25, {3, 3});
  for (std::size_t i = 0; i < 8; ++i) items[i].trace = TraceRef{"tr", static_cast<std::uint32_t>(i)};
  const auto idx = Index::build(items, {3, 3});
  const auto path = std::filesystem::temp_directory_path() / "swire_rt.swidx";
  idx.save(path);
  const auto back = Index::load(path);
  CHECK(back.items() == idx.items());
  CHECK(back.grid() == idx.grid());
  CHECK(back.fingerprint() == idx.fingerprint());
  const auto q = random_embedding(rng);
  CHECK(back.query_full(q, 25) == idx.query_full(q, 25));
  CHECK(back.query_flow(std::vector<Embedding>(3, q), 5) == idx.query_flow(std::vector<Embedding>(3, q), 5));

  // Corruption and truncation are detected.
  auto bytes = idx.serialize();
  bytes[bytes.size() / 2] ^= 0x40;
  binio::write_file(path, bytes);
  CHECK_THROWS_AS(Index::load(path), FormatError);
  bytes = idx.serialize();
  bytes.resize(bytes.size() - 7);
  binio::write_file(path, bytes);
  CHECK_THROWS_AS(Index::load(path), FormatError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(Index::load(path), IoError);
}

TEST_CASE("k must be positive and results are truncated to k") {
  Rng rng(16);
  const auto idx = Index::build(random_items(rng, 5));
  CHECK_THROWS_AS(idx.query_full(constant(0), 0), InvalidArgument);
  CHECK(idx.query_full(constant(0), 3).size() == 3u);
  CHECK(idx.query_full(constant(0), 50).size() == 5u);
}
