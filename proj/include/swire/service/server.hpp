#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "swire/service/query.hpp"

namespace httplib {
class Server;
}

namespace swire::service {

inline constexpr const char* kBuildVersion = "1.0.0";

struct ServerConfig {
  SnapshotPaths paths;
  std::string host = "127.0.0.1";
  int port = 8080;
  // Required by POST /index/reload; reload over HTTP is refused when empty.
  std::string admin_token;
};

// HTTP front end over an atomically swapped snapshot. Requests in flight
// keep the snapshot they started with.
class Server {
 public:
  explicit Server(ServerConfig config);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Loads the snapshot from the configured paths and swaps it in. On
  // failure the previous snapshot stays and the error is rethrown.
  void reload();
  std::shared_ptr<const Snapshot> snapshot() const;
  void set_snapshot(std::shared_ptr<const Snapshot> snap);

  // Binds (port 0 picks a free one) and serves until stop(). Returns false
  // if the socket could not be bound.
  bool listen();
  // listen() on a background thread; returns the bound port, or -1.
  int start();
  void stop();
  int port() const { return port_; }

 private:
  void routes();

  ServerConfig config_;
  std::unique_ptr<httplib::Server> http_;
  mutable std::mutex snap_mutex_;
  std::shared_ptr<const Snapshot> snap_;
  std::mutex reload_mutex_;
  std::thread thread_;
  std::atomic<int> port_{-1};
};

}  // namespace swire::service
