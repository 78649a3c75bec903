#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "swire/dataset/manifest.hpp"
#include "swire/index/index.hpp"
#include "swire/pipeline/pipeline.hpp"

namespace swire::service {

inline constexpr int kMaxK = 100;

// Everything a query needs, immutable once loaded.
struct Snapshot {
  pipeline::Models models;
  index::Index index;
  std::optional<dataset::Manifest> manifest;
  std::string weights_fingerprint;
  std::string index_fingerprint;
};

struct SnapshotPaths {
  std::filesystem::path weights;
  std::filesystem::path segment_weights;  // optional
  std::filesystem::path index;
  std::filesystem::path manifest;  // optional, enables screenshot lookup
};

// Throws IoError naming the missing file, or the loaders' format errors.
std::shared_ptr<const Snapshot> load_snapshot(const SnapshotPaths& paths);

enum class Mode { full, segments, flow };
const char* mode_name(Mode m);

struct QueryRequest {
  Mode mode = Mode::full;
  int k = 10;
  std::vector<std::uint8_t> image;               // full, segments
  std::vector<bool> mask;                        // segments, row-major
  std::vector<std::vector<std::uint8_t>> flow;   // flow, in order
};

// A rejected request: HTTP status and the field at fault.
class RequestError : public std::runtime_error {
 public:
  RequestError(int status, std::string field, const std::string& message)
      : std::runtime_error(message), status_(status), field_(std::move(field)) {}
  int status() const { return status_; }
  const std::string& field() const { return field_; }

 private:
  int status_;
  std::string field_;
};

// JSON body: {"mode", "k", "image" (base64 PNG/JPEG), "mask", "flow"}.
// 400 for malformed JSON or base64, 422 for mode/field mismatches.
QueryRequest parse_query_json(const std::string& body);

// Field checks shared by every transport.
void check_request(const QueryRequest& request);

// Decodes, encodes and ranks. Decoding problems are 400s; requests the
// index cannot answer (no parts, no long enough trace) are 422s.
RankedResults execute(const Snapshot& snapshot, const QueryRequest& request);

struct QueryResponse {
  RankedResults results;
  double latency_ms = 0.0;
  std::string index_fingerprint;
  Mode mode = Mode::full;
};

// {"results": [{"id", "distance", "thumbnail"}], "latency_ms",
//  "index_fingerprint", "mode"}
std::string response_json(const QueryResponse& response, const Snapshot& snapshot);
std::string error_json(const RequestError& error);

}  // namespace swire::service
