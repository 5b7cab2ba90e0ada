#pragma once

// HTTP front end for DecodeService:
//   POST /api/decode   decode a full angle trace
//   GET  /api/layout   cluster -> letters map
//   GET  /api/health   liveness and model version
// An optional static directory is mounted at / for the demo UI.

#include <string>

// Eigen must precede httplib: <resolv.h> defines a `_res` macro that
// collides with Eigen parameter names.
#include "headgest/pipeline.hpp"

#include "httplib.h"

namespace headgest {

inline void mount_routes(httplib::Server& server, const DecodeService& service, const std::string& static_dir = {}) {
  auto send = [](httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  };

  server.Post("/api/decode", [&service, send](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::parse_error& e) {
      send(res, 400, {{"error", "BadRequest"}, {"message", e.what()}});
      return;
    }
    const HandlerResponse r = service.handle_decode(body);
    send(res, r.status, r.body);
  });
  server.Get("/api/layout", [send](const httplib::Request&, httplib::Response& res) { send(res, 200, layout_json()); });
  server.Get("/api/health", [&service, send](const httplib::Request&, httplib::Response& res) {
    send(res, 200, service.health());
  });
  server.set_exception_handler([send](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      if (ep) std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    send(res, 500, {{"error", "Internal"}, {"message", what}});
  });
  if (!static_dir.empty()) server.set_mount_point("/", static_dir);
}

}  // namespace headgest
