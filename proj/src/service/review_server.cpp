#include "fundus/service/review_server.hpp"

#include <httplib.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fundus/core/error.hpp"

namespace fundus::service {

namespace {

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  res.status = status;
  res.set_content(json{{"error", code}, {"message", message}}.dump(), "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
  int status = 500;
  switch (e.code()) {
    case Errc::NotFound: status = 404; break;
    case Errc::InvalidTransition: status = 409; break;
    case Errc::InvalidArgument:
    case Errc::ParseError: status = 400; break;
    default: break;
  }
  send_error(res, status, to_string(e.code()), e.what());
}

std::string reviewer_of(const httplib::Request& req, const json* body = nullptr) {
  if (req.has_param("reviewer")) return req.get_param_value("reviewer");
  if (req.has_header("X-Reviewer")) return req.get_header_value("X-Reviewer");
  if (body && body->contains("reviewer") && (*body)["reviewer"].is_string()) return (*body)["reviewer"].get<std::string>();
  return {};
}

std::int64_t item_id(const httplib::Request& req) {
  try {
    return std::stoll(req.matches[1].str());
  } catch (const std::exception&) {
    fail(Errc::NotFound, "no item " + req.matches[1].str());
  }
}

std::string mime_for(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".tif" || ext == ".tiff") return "image/tiff";
  return "application/octet-stream";
}

}  // namespace

ReviewServer::ReviewServer(expansion::ReviewStore& store, ReviewServerOptions options)
    : store_(store), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

ReviewServer::~ReviewServer() { stop(); }

void ReviewServer::install_routes() {
  auto& s = *server_;

  s.Get("/api/queue/next", [this](const httplib::Request& req, httplib::Response& res) {
    const auto reviewer = reviewer_of(req);
    if (reviewer.empty()) return send_error(res, 400, "InvalidArgument", "reviewer is required");
    try {
      auto item = store_.lease_next(reviewer, options_.lease);
      if (!item) {
        res.status = 204;
        return;
      }
      res.set_content(expansion::to_json(*item).dump(), "application/json");
    } catch (const Error& e) {
      send_error(res, e);
    }
  });

  s.Post(R"(/api/review/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      return send_error(res, 400, "InvalidArgument", "body must be JSON");
    }
    if (!body.is_object() || !body.contains("decision") || !body["decision"].is_string())
      return send_error(res, 400, "InvalidArgument", "decision is required");
    if (body.contains("note") && !body["note"].is_string())
      return send_error(res, 400, "InvalidArgument", "note must be a string");
    const auto reviewer = reviewer_of(req, &body);
    if (reviewer.empty()) return send_error(res, 400, "InvalidArgument", "reviewer is required");
    try {
      const auto id = item_id(req);
      const auto decision = expansion::parse_decision(body["decision"].get<std::string>());
      const auto updated = store_.decide(id, reviewer, decision, body.value("note", std::string{}));
      res.set_content(json{{"id", id}, {"status", expansion::to_string(updated.status)}}.dump(), "application/json");
    } catch (const Error& e) {
      send_error(res, e);
    }
  });

  s.Get("/api/stats", [this](const httplib::Request&, httplib::Response& res) {
    try {
      res.set_content(store_.stats().to_json().dump(), "application/json");
    } catch (const Error& e) {
      send_error(res, e);
    }
  });

  s.Get(R"(/api/item/(\d+)/image)", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      const auto item = store_.review_item(item_id(req));
      const auto image = store_.image(item.image_id);
      if (!image || !image->image_path) fail(Errc::NotFound, "no image recorded for " + item.image_id);
      std::ifstream in(*image->image_path, std::ios::binary);
      if (!in) fail(Errc::NotFound, "image file missing for " + item.image_id);
      std::ostringstream bytes;
      bytes << in.rdbuf();
      res.set_content(bytes.str(), mime_for(*image->image_path));
    } catch (const Error& e) {
      send_error(res, e);
    }
  });

  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    send_error(res, 500, "Internal", what);
  });

  if (options_.static_dir) s.set_mount_point("/", options_.static_dir->string());
}

int ReviewServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = server_->bind_to_any_port(host);
    if (bound < 0) fail(Errc::IoError, "cannot bind " + host);
    return bound;
  }
  if (!server_->bind_to_port(host, port)) fail(Errc::IoError, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void ReviewServer::run() { server_->listen_after_bind(); }

void ReviewServer::stop() {
  if (server_) server_->stop();
}

bool ReviewServer::running() const { return server_ && server_->is_running(); }

void install_crash_hook_from_env(expansion::ReviewStore& store) {
  const char* at = std::getenv("FUNDUS_CRASH_AT");
  if (!at || !*at) return;
  std::string point = at;
  store.set_crash_hook([point](std::string_view where) {
    if (where == point) std::_Exit(86);
  });
}

}  // namespace fundus::service
