#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "swire/imaging/image.hpp"
#include "swire/index/index.hpp"

namespace swire::dataset {

inline constexpr int kSchemaVersion = 1;

struct PairRecord {
  std::string id;
  std::string app;
  std::string designer;
  // Paths as written in the manifest, relative to its directory unless absolute.
  std::filesystem::path screenshot;
  std::optional<std::filesystem::path> sketch_raw;
  std::optional<std::filesystem::path> sketch;
  // Sketch-area corners in the raw photo.
  std::optional<QuadCorners> corners;
  std::optional<index::TraceRef> trace;

  bool operator==(const PairRecord&) const = default;
};

struct Manifest {
  int schema_version = kSchemaVersion;
  std::vector<PairRecord> pairs;
  // Directory relative paths resolve against; not serialised.
  std::filesystem::path root;

  std::filesystem::path resolve(const std::filesystem::path& p) const;
  // Compares content, not root.
  bool operator==(const Manifest& other) const {
    return schema_version == other.schema_version && pairs == other.pairs;
  }
};

struct LoadOptions {
  // Prefix rewrites applied to every stored path before resolution, first
  // match wins. Adapts manifests to other on-disk naming conventions.
  std::vector<std::pair<std::string, std::string>> path_map;
  bool check_files = true;
};

// Throws IoError for a missing file and FormatError for malformed JSON or
// records; record errors name the offending id.
Manifest load_manifest(const std::filesystem::path& path, const LoadOptions& options = {});
Manifest parse_manifest(std::string_view json, const std::filesystem::path& root,
                        const LoadOptions& options = {});
std::string to_json(const Manifest& manifest);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

// Field presence, unique (id, designer) keys, and optionally file existence.
void validate(const Manifest& manifest, bool check_files);

struct ManifestStats {
  std::size_t pairs = 0;
  std::size_t examples = 0;
  std::size_t apps = 0;
  std::size_t designers = 0;
};
ManifestStats stats(const Manifest& manifest);

// The processed sketch for a record: read from `sketch` when present,
// otherwise rectified and binarised from the raw photo.
GrayImage load_sketch(const Manifest& manifest, const PairRecord& record, int out_w, int out_h);
GrayImage load_screenshot(const Manifest& manifest, const PairRecord& record);

}  // namespace swire::dataset
