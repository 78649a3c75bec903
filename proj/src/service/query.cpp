#include "swire/service/query.hpp"

#include <json.hpp>

#include "swire/imaging/io.hpp"
#include "swire/util/base64.hpp"
#include "swire/util/error.hpp"

namespace swire::service {

using json = nlohmann::json;

std::shared_ptr<const Snapshot> load_snapshot(const SnapshotPaths& paths) {
  auto require = [](const std::filesystem::path& p, const char* what) {
    if (!std::filesystem::exists(p)) throw IoError(std::string(what) + " not found: " + p.string());
  };
  require(paths.weights, "weights");
  require(paths.index, "index");
  auto snap = std::make_shared<Snapshot>();
  snap->models.full = encoder::load(paths.weights);
  if (!paths.segment_weights.empty()) {
    require(paths.segment_weights, "segment weights");
    snap->models.segments = encoder::load(paths.segment_weights);
  }
  snap->index = index::Index::load(paths.index);
  if (!paths.manifest.empty()) {
    require(paths.manifest, "manifest");
    snap->manifest = dataset::load_manifest(paths.manifest);
  }
  snap->weights_fingerprint = encoder::fingerprint(snap->models.full);
  snap->index_fingerprint = snap->index.fingerprint();
  return snap;
}

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::full: return "full";
    case Mode::segments: return "segments";
    case Mode::flow: return "flow";
  }
  return "unknown";
}

namespace {

std::vector<std::uint8_t> decode_field(const json& v, const std::string& field) {
  if (!v.is_string()) throw RequestError(400, field, field + " must be a base64 string");
  auto bytes = base64::decode(v.get<std::string>());
  if (!bytes) throw RequestError(400, field, field + " is not valid base64");
  if (bytes->empty()) throw RequestError(400, field, field + " is empty");
  return std::move(*bytes);
}

GrayImage decode_image(const std::vector<std::uint8_t>& bytes, const std::string& field) {
  try {
    return imaging::decode_gray(bytes);
  } catch (const Error& e) {
    throw RequestError(400, field, field + " is not a decodable PNG or JPEG image: " + e.what());
  }
}

}  // namespace

QueryRequest parse_query_json(const std::string& body) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error&) {
    throw RequestError(400, "body", "request body is not valid JSON");
  }
  if (!doc.is_object()) throw RequestError(400, "body", "request body must be a JSON object");
  QueryRequest req;
  if (!doc.contains("mode")) throw RequestError(422, "mode", "mode is required");
  if (!doc["mode"].is_string()) throw RequestError(400, "mode", "mode must be a string");
  const auto mode = doc["mode"].get<std::string>();
  if (mode == "full") {
    req.mode = Mode::full;
  } else if (mode == "segments") {
    req.mode = Mode::segments;
  } else if (mode == "flow") {
    req.mode = Mode::flow;
  } else {
    throw RequestError(422, "mode", "unknown mode '" + mode + "' (expected full, segments or flow)");
  }
  if (doc.contains("k")) {
    if (!doc["k"].is_number_integer()) throw RequestError(400, "k", "k must be an integer");
    const auto k = doc["k"].get<long long>();
    if (k < 1 || k > kMaxK) throw RequestError(422, "k", "k must be in [1, 100]");
    req.k = static_cast<int>(k);
  }
  for (const auto& [key, value] : doc.items()) {
    if (key != "mode" && key != "k" && key != "image" && key != "mask" && key != "flow") {
      throw RequestError(422, key, "unknown field '" + key + "'");
    }
  }
  const bool wants_image = req.mode != Mode::flow;
  if (doc.contains("image") != wants_image) {
    throw RequestError(422, "image", wants_image ? std::string("image is required in ") + mode + " mode"
                                                 : "image is not accepted in flow mode (use flow)");
  }
  if (doc.contains("mask") != (req.mode == Mode::segments)) {
    throw RequestError(422, "mask", req.mode == Mode::segments ? "mask is required in segments mode"
                                                               : "mask is only accepted in segments mode");
  }
  if (doc.contains("flow") != (req.mode == Mode::flow)) {
    throw RequestError(422, "flow", req.mode == Mode::flow ? "flow is required in flow mode"
                                                           : "flow is only accepted in flow mode");
  }
  if (wants_image) req.image = decode_field(doc["image"], "image");
  if (req.mode == Mode::segments) {
    const auto& m = doc["mask"];
    if (!m.is_array()) throw RequestError(400, "mask", "mask must be an array of booleans");
    for (const auto& v : m) {
      if (v.is_boolean()) {
        req.mask.push_back(v.get<bool>());
      } else if (v.is_number_integer() && (v.get<int>() == 0 || v.get<int>() == 1)) {
        req.mask.push_back(v.get<int>() == 1);
      } else {
        throw RequestError(400, "mask", "mask entries must be booleans or 0/1");
      }
    }
  }
  if (req.mode == Mode::flow) {
    const auto& f = doc["flow"];
    if (!f.is_array()) throw RequestError(400, "flow", "flow must be an array of base64 images");
    for (std::size_t i = 0; i < f.size(); ++i) req.flow.push_back(decode_field(f[i], "flow[" + std::to_string(i) + "]"));
  }
  check_request(req);
  return req;
}

void check_request(const QueryRequest& req) {
  if (req.k < 1 || req.k > kMaxK) throw RequestError(422, "k", "k must be in [1, 100]");
  switch (req.mode) {
    case Mode::full:
      if (req.image.empty()) throw RequestError(422, "image", "image is required in full mode");
      if (!req.mask.empty()) throw RequestError(422, "mask", "mask is only accepted in segments mode");
      if (!req.flow.empty()) throw RequestError(422, "flow", "flow is only accepted in flow mode");
      break;
    case Mode::segments:
      if (req.image.empty()) throw RequestError(422, "image", "image is required in segments mode");
      if (req.mask.empty()) throw RequestError(422, "mask", "mask is required in segments mode");
      if (std::none_of(req.mask.begin(), req.mask.end(), [](bool b) { return b; })) {
        throw RequestError(422, "mask", "mask must activate at least one cell");
      }
      if (!req.flow.empty()) throw RequestError(422, "flow", "flow is only accepted in flow mode");
      break;
    case Mode::flow:
      if (!req.image.empty()) throw RequestError(422, "image", "image is not accepted in flow mode (use flow)");
      if (!req.mask.empty()) throw RequestError(422, "mask", "mask is only accepted in segments mode");
      if (req.flow.size() < 2) throw RequestError(422, "flow", "flow needs at least 2 screens");
      break;
  }
}

RankedResults execute(const Snapshot& snap, const QueryRequest& req) {
  check_request(req);
  const auto& idx = snap.index;
  if (idx.empty()) throw RequestError(422, "index", "the index is empty");
  const auto k = static_cast<std::size_t>(req.k);
  switch (req.mode) {
    case Mode::full: {
      const auto sketch = decode_image(req.image, "image");
      return idx.query_full(pipeline::embed_sketch(snap.models.full, sketch), k);
    }
    case Mode::segments: {
      if (!idx.has_parts()) throw RequestError(422, "mode", "the index was built without part embeddings");
      if (req.mask.size() != static_cast<std::size_t>(idx.grid().cells())) {
        throw RequestError(422, "mask",
                           "mask has " + std::to_string(req.mask.size()) + " entries, the index grid is " +
                               std::to_string(idx.grid().rows) + "x" + std::to_string(idx.grid().cols));
      }
      const auto sketch = decode_image(req.image, "image");
      const auto cells = pipeline::segment_query(snap.models, sketch, idx.grid(), req.mask);
      return idx.query_segments(cells, k);
    }
    case Mode::flow: {
      if (req.flow.size() > idx.max_trace_length()) {
        throw RequestError(422, "flow",
                           "flow has " + std::to_string(req.flow.size()) + " screens, the longest trace has " +
                               std::to_string(idx.max_trace_length()));
      }
      std::vector<Embedding> seq;
      for (std::size_t i = 0; i < req.flow.size(); ++i) {
        seq.push_back(pipeline::embed_sketch(snap.models.full, decode_image(req.flow[i], "flow[" + std::to_string(i) + "]")));
      }
      return idx.query_flow(seq, k);
    }
  }
  throw RequestError(422, "mode", "unknown mode");
}

std::string response_json(const QueryResponse& r, const Snapshot& snap) {
  json results = json::array();
  for (const auto& hit : r.results) {
    json item = {{"id", hit.id}, {"distance", hit.distance}};
    if (r.mode == Mode::flow) {
      const auto members = snap.index.window_items(hit.id);
      item["items"] = members;
      item["thumbnail"] = members.empty() ? json(nullptr) : json("/item/" + members.front() + "/screenshot");
    } else {
      item["thumbnail"] = "/item/" + hit.id + "/screenshot";
    }
    results.push_back(std::move(item));
  }
  json doc = {{"results", std::move(results)},
              {"latency_ms", r.latency_ms},
              {"index_fingerprint", r.index_fingerprint},
              {"mode", mode_name(r.mode)}};
  return doc.dump();
}

std::string error_json(const RequestError& e) {
  return json{{"error", e.what()}, {"field", e.field()}, {"status", e.status()}}.dump();
}

}  // namespace swire::service
