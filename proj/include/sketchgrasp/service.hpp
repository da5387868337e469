#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "sketchgrasp/dataset.hpp"
#include "sketchgrasp/model.hpp"

namespace httplib {
class Server;
}

namespace sketchgrasp {

struct ServiceReply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Immutable model plus the identity reported by /health.
struct ModelSnapshot {
  Model model;
  std::string digest;
  std::int64_t iteration = 0;
};

/// HTTP front end over a model snapshot. Requests copy the current snapshot
/// pointer, so swap_model never disturbs requests in flight.
class GraspService {
 public:
  GraspService(std::shared_ptr<const ModelSnapshot> snapshot, std::vector<SceneSample> scenes,
               int thumbnail_size = 64);
  ~GraspService();
  GraspService(const GraspService&) = delete;
  GraspService& operator=(const GraspService&) = delete;

  void swap_model(std::shared_ptr<const ModelSnapshot> snapshot);
  std::shared_ptr<const ModelSnapshot> snapshot() const;

  ServiceReply health() const;
  ServiceReply scenes() const;
  ServiceReply scene_png(const std::string& id) const;
  /// Body: {"scene_id": str | "image_png_base64": str, "strokes": [[[x..],[y..]],..], "k": int}.
  ServiceReply infer(const std::string& body) const;

  /// Serves static files from `dir` under "/" (e.g. a built UI).
  void set_static_dir(const std::string& dir);

  /// Binds (port 0 picks a free port) and serves on a background thread.
  /// Returns the bound port; throws std::runtime_error if binding fails.
  int start(const std::string& host, int port);
  /// Blocks until stop() is called.
  void wait();
  void stop();

 private:
  mutable std::mutex mutex_;
  std::shared_ptr<const ModelSnapshot> snapshot_;
  std::vector<SceneSample> scenes_;
  std::vector<std::string> thumbnails_;  // base64 PNG per scene
  std::string static_dir_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace sketchgrasp
