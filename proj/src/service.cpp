#include "sketchgrasp/service.hpp"

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <stdexcept>

#include "sketchgrasp/codec.hpp"
#include "sketchgrasp/engine.hpp"

namespace sketchgrasp {

using nlohmann::json;

namespace {

ServiceReply error_reply(int status, const std::string& message) {
  return {status, "application/json", json{{"error", message}}.dump()};
}

}  // namespace

GraspService::GraspService(std::shared_ptr<const ModelSnapshot> snapshot,
                           std::vector<SceneSample> scenes, int thumbnail_size)
    : snapshot_(std::move(snapshot)), scenes_(std::move(scenes)) {
  if (!snapshot_) throw std::invalid_argument("GraspService: no model snapshot");
  for (const auto& s : scenes_) {
    thumbnails_.push_back(base64_encode(encode_png(letterbox(s.image, thumbnail_size).image)));
  }
}

GraspService::~GraspService() { stop(); }

void GraspService::swap_model(std::shared_ptr<const ModelSnapshot> snapshot) {
  if (!snapshot) throw std::invalid_argument("swap_model: null snapshot");
  std::lock_guard lock(mutex_);
  snapshot_ = std::move(snapshot);
}

std::shared_ptr<const ModelSnapshot> GraspService::snapshot() const {
  std::lock_guard lock(mutex_);
  return snapshot_;
}

ServiceReply GraspService::health() const {
  const auto snap = snapshot();
  return {200, "application/json",
          json{{"status", "ok"},
               {"version", kVersion},
               {"checkpoint_digest", snap->digest},
               {"iteration", snap->iteration},
               {"sketch_encoder", to_string(snap->model.config.sketch_encoder)},
               {"image_size", snap->model.config.image_size}}
              .dump()};
}

ServiceReply GraspService::scenes() const {
  json list = json::array();
  for (std::size_t i = 0; i < scenes_.size(); ++i) {
    list.push_back({{"id", scenes_[i].id},
                    {"width", scenes_[i].image.width},
                    {"height", scenes_[i].image.height},
                    {"thumbnail_png_base64", thumbnails_[i]}});
  }
  return {200, "application/json", json{{"scenes", list}}.dump()};
}

ServiceReply GraspService::scene_png(const std::string& id) const {
  for (const auto& s : scenes_) {
    if (s.id == id) return {200, "image/png", encode_png(s.image)};
  }
  return error_reply(404, "unknown scene '" + id + "'");
}

ServiceReply GraspService::infer(const std::string& body) const {
  const auto start = std::chrono::steady_clock::now();
  json req;
  try {
    req = json::parse(body);
  } catch (const json::exception& e) {
    return error_reply(400, std::string("malformed JSON: ") + e.what());
  }
  if (!req.is_object()) return error_reply(400, "request body must be a JSON object");
  if (!req.contains("strokes")) return error_reply(400, "missing field \"strokes\"");

  RawDrawing strokes;
  try {
    strokes = parse_strokes_json(req.at("strokes").dump());
  } catch (const std::exception& e) {
    return error_reply(400, e.what());
  }

  int k = 5;
  if (req.contains("k")) {
    if (!req.at("k").is_number_integer()) return error_reply(400, "\"k\" must be an integer");
    k = req.at("k").get<int>();
    if (k <= 0) return error_reply(400, "k must be positive");
  }

  Image image;
  if (req.contains("scene_id")) {
    if (!req.at("scene_id").is_string()) return error_reply(400, "\"scene_id\" must be a string");
    const std::string id = req.at("scene_id").get<std::string>();
    auto it = std::find_if(scenes_.begin(), scenes_.end(),
                           [&](const SceneSample& s) { return s.id == id; });
    if (it == scenes_.end()) return error_reply(404, "unknown scene '" + id + "'");
    image = it->image;
  } else if (req.contains("image_png_base64")) {
    if (!req.at("image_png_base64").is_string()) {
      return error_reply(400, "\"image_png_base64\" must be a string");
    }
    try {
      image = decode_png(base64_decode(req.at("image_png_base64").get<std::string>()));
    } catch (const std::exception& e) {
      return error_reply(400, std::string("image_png_base64: ") + e.what());
    }
  } else {
    return error_reply(400, "one of \"scene_id\" or \"image_png_base64\" is required");
  }

  const auto snap = snapshot();
  std::vector<GraspPrediction> grasps;
  try {
    grasps = sketchgrasp::infer(snap->model, image, strokes, k);
  } catch (const std::invalid_argument& e) {
    return error_reply(400, e.what());
  }
  json out = json::array();
  for (const auto& g : grasps) {
    out.push_back({{"x", g.rect.x},
                   {"y", g.rect.y},
                   {"w", g.rect.w},
                   {"h", g.rect.h},
                   {"theta", g.rect.theta},
                   {"score", g.score}});
  }
  const double elapsed =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return {200, "application/json", json{{"grasps", out}, {"elapsed_ms", elapsed}}.dump()};
}

void GraspService::set_static_dir(const std::string& dir) { static_dir_ = dir; }

int GraspService::start(const std::string& host, int port) {
  if (server_) throw std::logic_error("GraspService already started");
  server_ = std::make_unique<httplib::Server>();
  auto send = [](httplib::Response& res, const ServiceReply& reply) {
    res.status = reply.status;
    res.set_content(reply.body, reply.content_type);
  };
  server_->Get("/health", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, health());
  });
  server_->Get("/scenes", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, scenes());
  });
  server_->Get(R"(/scene/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, scene_png(req.matches[1]));
  });
  server_->Post("/infer", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, infer(req.body));
  });
  server_->set_exception_handler([](const httplib::Request&, httplib::Response& res,
                                    std::exception_ptr ep) {
    std::string message = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      message = e.what();
    } catch (...) {
    }
    res.status = 500;
    res.set_content(json{{"error", message}}.dump(), "application/json");
  });
  if (!static_dir_.empty() && !server_->set_mount_point("/", static_dir_)) {
    throw std::runtime_error("static directory not found: " + static_dir_);
  }
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) {
    server_.reset();
    throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void GraspService::wait() {
  if (thread_.joinable()) thread_.join();
}

void GraspService::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
  server_.reset();
}

}  // namespace sketchgrasp
