#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace swire {

struct RankedHit {
  std::string id;
  float distance = 0.0f;

  bool operator==(const RankedHit&) const = default;
};

// Ascending distance; equal distances ordered by ascending id.
using RankedResults = std::vector<RankedHit>;

inline bool ranks_before(const RankedHit& a, const RankedHit& b) {
  if (a.distance != b.distance) return a.distance < b.distance;
  return a.id < b.id;
}

}  // namespace swire
