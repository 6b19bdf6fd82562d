#pragma once

#include <optional>
#include <string>
#include <vector>

// Eigen must come before httplib: <resolv.h> defines a _res macro.
#include "common.hpp"

#include <httplib.h>

namespace gemcli {

// Read-only HTTP front end over one loaded model. Handlers only read the
// immutable model, cameras and bytes captured at construction.
class ModelServer {
 public:
  ModelServer(std::optional<GemModel> model, std::vector<Camera> cameras, Eigen::Vector3d background,
              const std::string& staticDir = {})
      : model_(std::move(model)), cameras_(std::move(cameras)), background_(background) {
    if (model_) {
      modelBytes_ = serialize(*model_);
      meta_ = modelMeta(*model_).dump();
    }
    if (cameras_.empty()) throw InvalidInput("serve: at least one camera is required");

    server_.Get("/model", [this](const httplib::Request&, httplib::Response& res) {
      if (!model_) return notFound(res);
      res.set_content(modelBytes_, "application/octet-stream");
    });
    server_.Get("/meta", [this](const httplib::Request&, httplib::Response& res) {
      if (!model_) return notFound(res);
      res.set_content(meta_, "application/json");
    });
    server_.Get("/render", [this](const httplib::Request& req, httplib::Response& res) { render(req, res); });
    if (!staticDir.empty() && !server_.set_mount_point("/", staticDir))
      throw InvalidInput("serve: static directory not found: " + staticDir);
  }

  int bindAnyPort(const std::string& host) { return server_.bind_to_any_port(host); }
  bool bind(const std::string& host, int port) { return server_.bind_to_port(host, port); }
  bool listenAfterBind() { return server_.listen_after_bind(); }
  void waitUntilReady() const { server_.wait_until_ready(); }
  void stop() { server_.stop(); }

 private:
  static void notFound(httplib::Response& res) {
    res.status = 404;
    res.set_content("no model loaded\n", "text/plain");
  }

  static void badRequest(httplib::Response& res, const std::string& why) {
    res.status = 400;
    res.set_content(why + "\n", "text/plain");
  }

  void render(const httplib::Request& req, httplib::Response& res) const {
    if (!model_) return notFound(res);
    const std::string format = req.has_param("format") ? req.get_param_value("format") : "png";
    if (format != "png" && format != "ppm") return badRequest(res, "format must be png or ppm");
    CoefficientVector k;
    std::size_t cam = 0;
    try {
      k = parseFlatCoefficients(req.has_param("k") ? req.get_param_value("k") : std::string(), *model_);
      if (req.has_param("cam")) {
        const std::string c = req.get_param_value("cam");
        std::size_t used = 0;
        const long v = std::stol(c, &used);
        if (used != c.size() || v < 0 || static_cast<std::size_t>(v) >= cameras_.size())
          throw InvalidInput("camera index out of range");
        cam = static_cast<std::size_t>(v);
      }
    } catch (const std::exception& e) {
      return badRequest(res, e.what());
    }
    const ImageBuffer img = renderModel(*model_, k, cameras_[cam], background_);
    res.set_content(encodeImage(img, format), format == "png" ? "image/png" : "image/x-portable-pixmap");
  }

  std::optional<GemModel> model_;
  std::vector<Camera> cameras_;
  Eigen::Vector3d background_;
  std::string modelBytes_;
  std::string meta_;
  httplib::Server server_;
};

}  // namespace gemcli
