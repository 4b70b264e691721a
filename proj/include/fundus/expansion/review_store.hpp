#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fundus/core/json_io.hpp"
#include "fundus/core/types.hpp"
#include "fundus/expansion/generator.hpp"

struct sqlite3;

namespace fundus::expansion {

enum class Decision { Accept, Discard, Regenerate };

std::string to_string(Decision decision);
/// Throws InvalidArgument.
Decision parse_decision(std::string_view text);

struct StoredImage {
  StructuredAnnotation annotation;
  std::optional<std::filesystem::path> image_path;
  Split split = Split::Train;
};

/// What a reviewer is shown. Carries nothing about the generator: no tag,
/// template, model, seed or attempt.
struct ReviewItem {
  std::int64_t id = 0;
  std::string image_id;
  int width = 0;
  int height = 0;
  std::string text;
  std::vector<BoundingBox> boxes;
  std::int64_t lease_expires_at_ms = 0;
};

json to_json(const ReviewItem& item);

struct AuditEvent {
  std::int64_t seq = 0;
  std::int64_t text_id = 0;
  std::string kind;  // generated, leased, decided, regenerated, regeneration_failed
  std::string actor;
  std::string from_status;
  std::string to_status;
  std::string note;
  std::int64_t at_ms = 0;
};

struct StoreStats {
  std::map<TextStatus, std::int64_t> by_status;
  /// regenerate_requested items whose replacement is not generated yet.
  std::int64_t awaiting_regeneration = 0;

  [[nodiscard]] std::int64_t count(TextStatus s) const;
  [[nodiscard]] json to_json() const;
};

/// Single-file SQLite store: images with their annotations, the current state
/// of every generated text, and an append-only event log. Every mutating call
/// commits before returning. Safe to share between threads.
class ReviewStore {
 public:
  /// Milliseconds since the epoch; injectable for lease tests.
  using Clock = std::function<std::int64_t()>;
  static std::int64_t system_now_ms();

  explicit ReviewStore(const std::filesystem::path& path, Clock clock = system_now_ms);
  ~ReviewStore();
  ReviewStore(const ReviewStore&) = delete;
  ReviewStore& operator=(const ReviewStore&) = delete;

  /// Insert or replace an image and its annotation.
  void put_image(const StructuredAnnotation& annotation, const std::optional<ImageRecord>& record = std::nullopt);
  [[nodiscard]] std::optional<StoredImage> image(const std::string& image_id) const;
  [[nodiscard]] std::vector<std::string> image_ids() const;

  /// Stores a new text (status taken from the argument) and returns its id.
  std::int64_t insert_text(const GeneratedText& text);
  [[nodiscard]] std::optional<GeneratedText> text(std::int64_t id) const;
  [[nodiscard]] std::vector<GeneratedText> texts_for(const std::string& image_id,
                                                     const std::string& template_id) const;
  [[nodiscard]] bool has_text(const std::string& image_id, const std::string& template_id) const;

  /// Only accepted texts, read through the accepted_texts view.
  [[nodiscard]] std::vector<GeneratedText> accepted_texts() const;
  /// Every text in id order.
  [[nodiscard]] std::vector<GeneratedText> all_texts() const;

  /// Oldest pending item not under someone else's live lease. A reviewer who
  /// already holds a live lease gets that item back with the lease renewed.
  std::optional<ReviewItem> lease_next(const std::string& reviewer, std::chrono::milliseconds lease);
  /// Reviewer-facing view of any item; NotFound if unknown.
  [[nodiscard]] ReviewItem review_item(std::int64_t id) const;

  /// Compare-and-set from pending_review. Errors: NotFound; InvalidTransition
  /// when the item is not pending, is leased to another reviewer, or the
  /// reviewer's own lease has expired.
  GeneratedText decide(std::int64_t id, const std::string& reviewer, Decision decision, const std::string& note = "");

  /// regenerate_requested items without a replacement yet, oldest first.
  [[nodiscard]] std::vector<GeneratedText> regeneration_queue() const;
  /// Atomically inserts the replacement (attempt + 1, parent_id = old_id) and
  /// marks the request fulfilled. InvalidTransition if already fulfilled.
  std::int64_t fulfill_regeneration(std::int64_t old_id, GeneratedText replacement);
  /// Gives up on a request so the worker does not retry it forever.
  void fail_regeneration(std::int64_t old_id, const std::string& reason);

  [[nodiscard]] StoreStats stats() const;
  [[nodiscard]] std::vector<AuditEvent> events(std::optional<std::int64_t> text_id = std::nullopt) const;

  /// Test hook called at "before_commit" and "after_commit" inside decide().
  void set_crash_hook(std::function<void(std::string_view)> hook);

 private:
  class Tx;
  void exec(const char* sql) const;
  std::int64_t insert_row(const GeneratedText& text);
  void log_event(std::int64_t text_id, std::string_view kind, std::string_view actor, std::string_view from,
                 std::string_view to, std::string_view note);
  std::vector<GeneratedText> query_texts(const std::string& sql, const std::vector<std::string>& args) const;

  sqlite3* db_ = nullptr;
  Clock clock_;
  mutable std::recursive_mutex mutex_;
  std::function<void(std::string_view)> crash_hook_;
};

}  // namespace fundus::expansion
