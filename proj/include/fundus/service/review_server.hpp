#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "fundus/expansion/review_store.hpp"

namespace httplib {
class Server;
}

namespace fundus::service {

struct ReviewServerOptions {
  std::chrono::milliseconds lease{std::chrono::minutes(15)};
  std::optional<std::filesystem::path> static_dir;
};

/// HTTP front of the review store.
///   GET  /api/queue/next?reviewer=<id>   oldest pending item, leased; 204 if none
///   POST /api/review/<id>                {"decision": accept|discard|regenerate, "note"?}
///   GET  /api/stats                      counts by status
///   GET  /api/item/<id>/image            the fundus image
/// The reviewer id may also come from the X-Reviewer header. Errors are
/// {"error", "message"} with 400 (malformed), 404 (unknown item) or 409
/// (not pending, or lease lost). Decisions are committed before the reply.
class ReviewServer {
 public:
  ReviewServer(expansion::ReviewStore& store, ReviewServerOptions options);
  ~ReviewServer();
  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  /// Binds; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  void run();
  void stop();
  [[nodiscard]] bool running() const;

 private:
  void install_routes();

  expansion::ReviewStore& store_;
  ReviewServerOptions options_;
  std::unique_ptr<httplib::Server> server_;
};

/// When FUNDUS_CRASH_AT names a commit point ("before_commit" or
/// "after_commit"), the process exits abruptly there during a decision. Used
/// to test durability.
void install_crash_hook_from_env(expansion::ReviewStore& store);

}  // namespace fundus::service
