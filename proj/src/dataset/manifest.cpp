#include "swire/dataset/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "swire/dataset/synthetic.hpp"
#include "swire/imaging/io.hpp"
#include "swire/util/error.hpp"

namespace swire::dataset {

using json = nlohmann::json;

namespace {

std::string record_name(const json& rec, std::size_t i) {
  if (rec.is_object() && rec.contains("id") && rec["id"].is_string()) {
    return "pair '" + rec["id"].get<std::string>() + "'";
  }
  return "pair #" + std::to_string(i);
}

std::string required_string(const json& rec, const char* field, const std::string& who) {
  if (!rec.contains(field)) throw FormatError(who + ": missing field '" + field + "'");
  if (!rec[field].is_string() || rec[field].get<std::string>().empty()) {
    throw FormatError(who + ": field '" + field + "' must be a nonempty string");
  }
  return rec[field].get<std::string>();
}

std::filesystem::path mapped(const std::string& stored, const LoadOptions& options) {
  for (const auto& [from, to] : options.path_map) {
    if (stored.compare(0, from.size(), from) == 0) return to + stored.substr(from.size());
  }
  return stored;
}

QuadCorners parse_corners(const json& v, const std::string& who) {
  if (!v.is_array() || v.size() != 4) throw FormatError(who + ": 'corners' must hold 4 [x, y] points");
  QuadCorners q;
  for (std::size_t k = 0; k < 4; ++k) {
    const auto& p = v[k];
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
      throw FormatError(who + ": 'corners' must hold 4 [x, y] points");
    }
    q.pts[k] = {p[0].get<double>(), p[1].get<double>()};
  }
  return q;
}

PairRecord parse_record(const json& rec, std::size_t i, const LoadOptions& options) {
  const std::string who = record_name(rec, i);
  if (!rec.is_object()) throw FormatError(who + ": record must be an object");
  PairRecord r;
  r.id = required_string(rec, "id", who);
  r.app = required_string(rec, "app", who);
  r.designer = required_string(rec, "designer", who);
  r.screenshot = mapped(required_string(rec, "screenshot", who), options);
  if (rec.contains("sketch")) r.sketch = mapped(required_string(rec, "sketch", who), options);
  if (rec.contains("sketch_raw")) r.sketch_raw = mapped(required_string(rec, "sketch_raw", who), options);
  if (rec.contains("corners")) r.corners = parse_corners(rec["corners"], who);
  if (rec.contains("trace")) {
    const auto& t = rec["trace"];
    if (!t.is_object() || !t.contains("position") || !t["position"].is_number_unsigned()) {
      throw FormatError(who + ": 'trace' needs an id and a nonnegative integer position");
    }
    r.trace = index::TraceRef{required_string(t, "id", who + " trace"), t["position"].get<std::uint32_t>()};
  }
  return r;
}

}  // namespace

std::filesystem::path Manifest::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() ? p : root / p;
}

void validate(const Manifest& manifest, bool check_files) {
  if (manifest.schema_version != kSchemaVersion) {
    throw FormatError("manifest: unsupported schema_version " + std::to_string(manifest.schema_version));
  }
  std::set<std::pair<std::string, std::string>> keys;
  for (const auto& r : manifest.pairs) {
    const std::string who = "pair '" + r.id + "'";
    if (r.id.empty() || r.app.empty() || r.designer.empty()) {
      throw FormatError(who + ": id, app and designer must be nonempty");
    }
    if (r.screenshot.empty()) throw FormatError(who + ": missing screenshot path");
    if (!r.sketch && !(r.sketch_raw && r.corners)) {
      throw FormatError(who + ": needs a processed sketch or a raw photo with corners");
    }
    if (!keys.emplace(r.id, r.designer).second) {
      throw FormatError(who + ": duplicate record for designer '" + r.designer + "'");
    }
    if (r.corners) {
      try {
        swire::validate(*r.corners);
      } catch (const InvalidArgument& e) {
        throw FormatError(who + ": corners: " + e.what());
      }
    }
    if (check_files) {
      auto require = [&](const std::filesystem::path& p, const char* what) {
        if (!std::filesystem::exists(manifest.resolve(p))) {
          throw FormatError(who + ": " + what + " not found: " + manifest.resolve(p).string());
        }
      };
      require(r.screenshot, "screenshot");
      if (r.sketch) require(*r.sketch, "sketch");
      if (r.sketch_raw) require(*r.sketch_raw, "raw sketch");
    }
  }
}

Manifest parse_manifest(std::string_view text, const std::filesystem::path& root, const LoadOptions& options) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  if (!doc.is_object()) throw FormatError("manifest: top level must be an object");
  if (!doc.contains("schema_version") || !doc["schema_version"].is_number_integer()) {
    throw FormatError("manifest: missing integer 'schema_version'");
  }
  if (!doc.contains("pairs") || !doc["pairs"].is_array()) throw FormatError("manifest: missing array 'pairs'");
  Manifest m;
  m.root = root;
  m.schema_version = doc["schema_version"].get<int>();
  const auto& pairs = doc["pairs"];
  m.pairs.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) m.pairs.push_back(parse_record(pairs[i], i, options));
  validate(m, options.check_files);
  return m;
}

Manifest load_manifest(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("manifest not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str(), path.parent_path(), options);
}

std::string to_json(const Manifest& manifest) {
  json pairs = json::array();
  for (const auto& r : manifest.pairs) {
    json rec = {{"id", r.id}, {"app", r.app}, {"designer", r.designer}, {"screenshot", r.screenshot.generic_string()}};
    if (r.sketch) rec["sketch"] = r.sketch->generic_string();
    if (r.sketch_raw) rec["sketch_raw"] = r.sketch_raw->generic_string();
    if (r.corners) {
      json c = json::array();
      for (const auto& p : r.corners->pts) c.push_back({p.x, p.y});
      rec["corners"] = c;
    }
    if (r.trace) rec["trace"] = {{"id", r.trace->id}, {"position", r.trace->position}};
    pairs.push_back(std::move(rec));
  }
  json doc = {{"schema_version", manifest.schema_version}, {"pairs", std::move(pairs)}};
  return doc.dump(2) + "\n";
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest: " + path.string());
  out << to_json(manifest);
  if (!out) throw IoError("write failed: " + path.string());
}

ManifestStats stats(const Manifest& manifest) {
  std::set<std::string> examples, apps, designers;
  for (const auto& r : manifest.pairs) {
    examples.insert(r.id);
    apps.insert(r.app);
    designers.insert(r.designer);
  }
  return {manifest.pairs.size(), examples.size(), apps.size(), designers.size()};
}

GrayImage load_sketch(const Manifest& manifest, const PairRecord& record, int out_w, int out_h) {
  if (record.sketch) return imaging::read_gray(manifest.resolve(*record.sketch));
  if (record.sketch_raw && record.corners) {
    return postprocess(imaging::read_gray(manifest.resolve(*record.sketch_raw)), *record.corners, out_w, out_h);
  }
  throw FormatError("pair '" + record.id + "': no sketch available");
}

GrayImage load_screenshot(const Manifest& manifest, const PairRecord& record) {
  return imaging::read_gray(manifest.resolve(record.screenshot));
}

}  // namespace swire::dataset
