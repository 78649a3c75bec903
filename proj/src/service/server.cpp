#include "swire/service/server.hpp"

#include <chrono>

#include <httplib.h>
#include <json.hpp>

#include "swire/imaging/io.hpp"
#include "swire/util/error.hpp"

namespace swire::service {

using json = nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const std::string& body) {
  res.status = status;
  res.set_content(body, "application/json");
}

void send_error(httplib::Response& res, const RequestError& e) { send_json(res, e.status(), error_json(e)); }

std::string multipart_text(const httplib::Request& req, const std::string& key) {
  return req.get_file_value(key).content;
}

QueryRequest parse_multipart(const httplib::Request& req) {
  QueryRequest q;
  if (!req.has_file("mode")) throw RequestError(422, "mode", "mode is required");
  const std::string mode = multipart_text(req, "mode");
  if (mode == "full") {
    q.mode = Mode::full;
  } else if (mode == "segments") {
    q.mode = Mode::segments;
  } else if (mode == "flow") {
    q.mode = Mode::flow;
  } else {
    throw RequestError(422, "mode", "unknown mode '" + mode + "' (expected full, segments or flow)");
  }
  if (req.has_file("k")) {
    const std::string k = multipart_text(req, "k");
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(k, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != k.size()) throw RequestError(400, "k", "k must be an integer");
    if (v < 1 || v > kMaxK) throw RequestError(422, "k", "k must be in [1, 100]");
    q.k = static_cast<int>(v);
  }
  if (req.has_file("image")) {
    const auto& c = req.get_file_value("image").content;
    q.image.assign(c.begin(), c.end());
    if (q.image.empty()) throw RequestError(400, "image", "image is empty");
  }
  if (req.has_file("mask")) {
    // Comma-separated 0/1 or true/false.
    const std::string text = multipart_text(req, "mask");
    std::size_t start = 0;
    while (start <= text.size()) {
      const auto end = std::min(text.find(',', start), text.size());
      const std::string tok = text.substr(start, end - start);
      if (tok == "1" || tok == "true") {
        q.mask.push_back(true);
      } else if (tok == "0" || tok == "false") {
        q.mask.push_back(false);
      } else {
        throw RequestError(400, "mask", "mask must be comma-separated 0/1 values");
      }
      start = end + 1;
    }
  }
  for (const auto& f : req.get_file_values("flow")) {
    q.flow.emplace_back(f.content.begin(), f.content.end());
    if (q.flow.back().empty()) throw RequestError(400, "flow", "flow image is empty");
  }
  if (q.mode == Mode::flow && req.has_file("image")) {
    throw RequestError(422, "image", "image is not accepted in flow mode (use flow)");
  }
  check_request(q);
  return q;
}

}  // namespace

Server::Server(ServerConfig config) : config_(std::move(config)), http_(std::make_unique<httplib::Server>()) {
  routes();
}

Server::~Server() { stop(); }

std::shared_ptr<const Snapshot> Server::snapshot() const {
  std::lock_guard lock(snap_mutex_);
  return snap_;
}

void Server::set_snapshot(std::shared_ptr<const Snapshot> snap) {
  std::lock_guard lock(snap_mutex_);
  snap_ = std::move(snap);
}

void Server::reload() {
  std::lock_guard guard(reload_mutex_);
  auto fresh = load_snapshot(config_.paths);
  set_snapshot(std::move(fresh));
}

void Server::routes() {
  auto unavailable = [](httplib::Response& res) {
    send_json(res, 503, json{{"error", "no index snapshot is loaded"}, {"status", 503}}.dump());
  };

  http_->Get("/healthz", [this, unavailable](const httplib::Request&, httplib::Response& res) {
    const auto snap = snapshot();
    if (!snap) return unavailable(res);
    send_json(res, 200,
              json{{"status", "ok"},
                   {"build", kBuildVersion},
                   {"index_fingerprint", snap->index_fingerprint},
                   {"weights_fingerprint", snap->weights_fingerprint}}
                  .dump());
  });

  http_->Get("/index/info", [this, unavailable](const httplib::Request&, httplib::Response& res) {
    const auto snap = snapshot();
    if (!snap) return unavailable(res);
    const auto& idx = snap->index;
    send_json(res, 200,
              json{{"items", idx.size()},
                   {"grid", {{"rows", idx.grid().rows}, {"cols", idx.grid().cols}}},
                   {"has_parts", idx.has_parts()},
                   {"max_trace_length", idx.max_trace_length()},
                   {"input_size", snap->models.full.sketch.config.input_size},
                   {"index_fingerprint", snap->index_fingerprint},
                   {"weights_fingerprint", snap->weights_fingerprint}}
                  .dump());
  });

  http_->Get(R"(/item/([^/]+)/screenshot)", [this, unavailable](const httplib::Request& req, httplib::Response& res) {
    const auto snap = snapshot();
    if (!snap) return unavailable(res);
    const std::string id = req.matches[1];
    auto not_found = [&](const std::string& why) {
      send_json(res, 404, json{{"error", why}, {"field", "id"}, {"status", 404}}.dump());
    };
    if (!snap->index.find(id)) return not_found("unknown item '" + id + "'");
    if (!snap->manifest) return not_found("the service was started without a manifest");
    for (const auto& r : snap->manifest->pairs) {
      if (r.id != id) continue;
      try {
        const auto bytes = imaging::read_bytes(snap->manifest->resolve(r.screenshot));
        const bool png = bytes.size() > 4 && bytes[1] == 'P' && bytes[2] == 'N' && bytes[3] == 'G';
        res.status = 200;
        res.set_content(std::string(bytes.begin(), bytes.end()), png ? "image/png" : "image/jpeg");
      } catch (const Error& e) {
        not_found(std::string("screenshot unavailable: ") + e.what());
      }
      return;
    }
    not_found("item '" + id + "' is not in the manifest");
  });

  http_->Post("/query", [this, unavailable](const httplib::Request& req, httplib::Response& res) {
    const auto snap = snapshot();
    if (!snap) return unavailable(res);
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const QueryRequest q = req.is_multipart_form_data() ? parse_multipart(req) : parse_query_json(req.body);
      QueryResponse out;
      out.results = execute(*snap, q);
      out.mode = q.mode;
      out.index_fingerprint = snap->index_fingerprint;
      out.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      send_json(res, 200, response_json(out, *snap));
    } catch (const RequestError& e) {
      send_error(res, e);
    } catch (const Error& e) {
      send_json(res, 500, json{{"error", e.what()}, {"status", 500}}.dump());
    }
  });

  http_->Post("/index/reload", [this](const httplib::Request& req, httplib::Response& res) {
    if (config_.admin_token.empty()) {
      return send_json(res, 403, json{{"error", "reload over HTTP is disabled (SWIRE_ADMIN_TOKEN unset)"},
                                      {"status", 403}}.dump());
    }
    const std::string presented = req.has_header("Authorization") ? req.get_header_value("Authorization") : "";
    if (presented != "Bearer " + config_.admin_token) {
      return send_json(res, 401, json{{"error", "missing or wrong admin token"}, {"status", 401}}.dump());
    }
    try {
      reload();
      const auto snap = snapshot();
      send_json(res, 200, json{{"status", "reloaded"}, {"index_fingerprint", snap->index_fingerprint}}.dump());
    } catch (const std::exception& e) {
      send_json(res, 500, json{{"error", std::string("reload failed, previous snapshot kept: ") + e.what()},
                               {"status", 500}}.dump());
    }
  });
}

bool Server::listen() {
  const int bound = config_.port == 0 ? http_->bind_to_any_port(config_.host)
                                      : (http_->bind_to_port(config_.host, config_.port) ? config_.port : -1);
  if (bound < 0) return false;
  port_ = bound;
  return http_->listen_after_bind();
}

int Server::start() {
  const int bound = config_.port == 0 ? http_->bind_to_any_port(config_.host)
                                      : (http_->bind_to_port(config_.host, config_.port) ? config_.port : -1);
  if (bound < 0) return -1;
  port_ = bound;
  thread_ = std::thread([this] { http_->listen_after_bind(); });
  http_->wait_until_ready();
  return bound;
}

void Server::stop() {
  if (http_) http_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace swire::service
