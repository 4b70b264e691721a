#include "fundus/expansion/review_store.hpp"

#include <sqlite3.h>

#include "fundus/core/error.hpp"

namespace fundus::expansion {
namespace {

constexpr const char* kSchema = R"sql(
CREATE TABLE IF NOT EXISTS images (
  id          TEXT PRIMARY KEY,
  image_path  TEXT,
  split       TEXT NOT NULL DEFAULT 'train',
  width       INTEGER NOT NULL,
  height      INTEGER NOT NULL,
  annotation  TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS texts (
  id            INTEGER PRIMARY KEY AUTOINCREMENT,
  image_id      TEXT NOT NULL REFERENCES images(id),
  template_id   TEXT NOT NULL,
  purpose       TEXT NOT NULL,
  body          TEXT NOT NULL,
  box_refs      TEXT NOT NULL,
  generator_tag TEXT NOT NULL,
  status        TEXT NOT NULL,
  attempt       INTEGER NOT NULL,
  seed          TEXT NOT NULL,
  retry_count   INTEGER NOT NULL,
  parent_id     INTEGER REFERENCES texts(id),
  target        TEXT,
  lease_owner   TEXT,
  lease_expires INTEGER,
  regen_done    INTEGER NOT NULL DEFAULT 0,
  created_at    INTEGER NOT NULL,
  updated_at    INTEGER NOT NULL
);
CREATE INDEX IF NOT EXISTS texts_status ON texts(status, id);
CREATE INDEX IF NOT EXISTS texts_image ON texts(image_id, template_id);
CREATE TABLE IF NOT EXISTS events (
  seq         INTEGER PRIMARY KEY AUTOINCREMENT,
  text_id     INTEGER NOT NULL,
  kind        TEXT NOT NULL,
  actor       TEXT NOT NULL,
  from_status TEXT NOT NULL,
  to_status   TEXT NOT NULL,
  note        TEXT NOT NULL,
  at          INTEGER NOT NULL
);
CREATE VIEW IF NOT EXISTS accepted_texts AS SELECT * FROM texts WHERE status = 'accepted';
)sql";

constexpr const char* kTextColumns =
    "t.id, t.image_id, t.template_id, t.purpose, t.body, t.box_refs, t.generator_tag, t.status, t.attempt, "
    "t.seed, t.retry_count, t.parent_id, t.target, i.width, i.height";

class Stmt {
 public:
  Stmt(sqlite3* db, const std::string& sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql.c_str(), -1, &stmt_, nullptr) != SQLITE_OK) {
      fail(Errc::StoreError, std::string("prepare: ") + sqlite3_errmsg(db));
    }
  }
  ~Stmt() { sqlite3_finalize(stmt_); }
  Stmt(const Stmt&) = delete;
  Stmt& operator=(const Stmt&) = delete;

  Stmt& bind(int i, const std::string& v) {
    check(sqlite3_bind_text(stmt_, i, v.c_str(), static_cast<int>(v.size()), SQLITE_TRANSIENT));
    return *this;
  }
  Stmt& bind(int i, std::int64_t v) {
    check(sqlite3_bind_int64(stmt_, i, v));
    return *this;
  }
  Stmt& bind(int i, const std::optional<std::string>& v) {
    if (!v) check(sqlite3_bind_null(stmt_, i));
    else bind(i, *v);
    return *this;
  }
  Stmt& bind(int i, const std::optional<std::int64_t>& v) {
    if (!v) check(sqlite3_bind_null(stmt_, i));
    else bind(i, *v);
    return *this;
  }

  /// True while rows remain.
  bool step() {
    const int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    fail(Errc::StoreError, std::string("step: ") + sqlite3_errmsg(db_));
  }
  void run() {
    while (step()) {
    }
  }

  [[nodiscard]] bool is_null(int c) const { return sqlite3_column_type(stmt_, c) == SQLITE_NULL; }
  [[nodiscard]] std::string text(int c) const {
    const auto* p = sqlite3_column_text(stmt_, c);
    return p ? std::string(reinterpret_cast<const char*>(p), static_cast<std::size_t>(sqlite3_column_bytes(stmt_, c)))
             : std::string();
  }
  [[nodiscard]] std::int64_t int64(int c) const { return sqlite3_column_int64(stmt_, c); }

 private:
  void check(int rc) const {
    if (rc != SQLITE_OK) fail(Errc::StoreError, std::string("bind: ") + sqlite3_errmsg(db_));
  }

  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

GeneratedText read_text_row(const Stmt& s) {
  GeneratedText t;
  t.id = s.int64(0);
  t.image_id = s.text(1);
  t.template_id = s.text(2);
  t.purpose = parse_purpose(s.text(3));
  t.text = s.text(4);
  const ImageSize size{static_cast<int>(s.int64(13)), static_cast<int>(s.int64(14))};
  for (const auto& b : json::parse(s.text(5))) t.box_refs.push_back(bounding_box_from_json(b, size));
  t.generator_tag = s.text(6);
  t.status = parse_text_status(s.text(7));
  t.attempt = static_cast<int>(s.int64(8));
  t.seed = std::stoull(s.text(9));
  t.retry_count = static_cast<int>(s.int64(10));
  if (!s.is_null(11)) t.parent_id = s.int64(11);
  if (!s.is_null(12)) t.target = s.text(12);
  return t;
}

std::string box_refs_json(const GeneratedText& t) {
  json refs = json::array();
  for (const auto& b : t.box_refs) refs.push_back(to_json(b));
  return refs.dump();
}

}  // namespace

/// BEGIN IMMEDIATE ... COMMIT, rolled back if not committed.
class ReviewStore::Tx {
 public:
  explicit Tx(const ReviewStore& store) : store_(store) { store_.exec("BEGIN IMMEDIATE"); }
  ~Tx() {
    if (!done_) sqlite3_exec(store_.db_, "ROLLBACK", nullptr, nullptr, nullptr);
  }
  void commit() {
    store_.exec("COMMIT");
    done_ = true;
  }

 private:
  const ReviewStore& store_;
  bool done_ = false;
};

std::string to_string(Decision decision) {
  switch (decision) {
    case Decision::Accept: return "accept";
    case Decision::Discard: return "discard";
    case Decision::Regenerate: return "regenerate";
  }
  return "?";
}

Decision parse_decision(std::string_view text) {
  for (auto d : {Decision::Accept, Decision::Discard, Decision::Regenerate}) {
    if (to_string(d) == text) return d;
  }
  fail(Errc::InvalidArgument, "decision must be accept, discard or regenerate");
}

json to_json(const ReviewItem& item) {
  json boxes = json::array();
  for (const auto& b : item.boxes) boxes.push_back({{"category", std::string(code(b.category))}, {"box", rect_to_json(b.rect)}});
  return {{"id", item.id},
          {"image_id", item.image_id},
          {"image_url", "/api/item/" + std::to_string(item.id) + "/image"},
          {"width", item.width},
          {"height", item.height},
          {"text", item.text},
          {"boxes", boxes},
          {"lease_expires_at", item.lease_expires_at_ms}};
}

std::int64_t StoreStats::count(TextStatus s) const {
  const auto it = by_status.find(s);
  return it == by_status.end() ? 0 : it->second;
}

json StoreStats::to_json() const {
  json j = json::object();
  for (auto s : {TextStatus::PendingReview, TextStatus::Accepted, TextStatus::Discarded, TextStatus::RegenerateRequested}) {
    j[to_string(s)] = count(s);
  }
  j["awaiting_regeneration"] = awaiting_regeneration;
  return j;
}

std::int64_t ReviewStore::system_now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

ReviewStore::ReviewStore(const std::filesystem::path& path, Clock clock) : clock_(std::move(clock)) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (sqlite3_open_v2(path.c_str(), &db_, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX,
                      nullptr) != SQLITE_OK) {
    const std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
    sqlite3_close(db_);
    fail(Errc::StoreError, "cannot open store " + path.string() + ": " + msg);
  }
  sqlite3_busy_timeout(db_, 10000);
  exec("PRAGMA journal_mode=WAL");
  exec("PRAGMA synchronous=FULL");
  exec("PRAGMA foreign_keys=ON");
  exec(kSchema);
}

ReviewStore::~ReviewStore() { sqlite3_close(db_); }

void ReviewStore::exec(const char* sql) const {
  char* err = nullptr;
  if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown error";
    sqlite3_free(err);
    fail(Errc::StoreError, msg);
  }
}

void ReviewStore::set_crash_hook(std::function<void(std::string_view)> hook) {
  std::lock_guard lock(mutex_);
  crash_hook_ = std::move(hook);
}

void ReviewStore::log_event(std::int64_t text_id, std::string_view kind, std::string_view actor, std::string_view from,
                            std::string_view to, std::string_view note) {
  Stmt s(db_, "INSERT INTO events(text_id, kind, actor, from_status, to_status, note, at) VALUES(?,?,?,?,?,?,?)");
  s.bind(1, text_id)
      .bind(2, std::string(kind))
      .bind(3, std::string(actor))
      .bind(4, std::string(from))
      .bind(5, std::string(to))
      .bind(6, std::string(note))
      .bind(7, clock_());
  s.run();
}

void ReviewStore::put_image(const StructuredAnnotation& annotation, const std::optional<ImageRecord>& record) {
  std::lock_guard lock(mutex_);
  Stmt s(db_,
         "INSERT INTO images(id, image_path, split, width, height, annotation) VALUES(?,?,?,?,?,?) "
         "ON CONFLICT(id) DO UPDATE SET image_path = excluded.image_path, split = excluded.split, "
         "width = excluded.width, height = excluded.height, annotation = excluded.annotation");
  std::optional<std::string> path;
  if (record) path = (record->resolved_image_path.empty() ? record->image_path : record->resolved_image_path).string();
  s.bind(1, annotation.image_id)
      .bind(2, path)
      .bind(3, to_string(record ? record->split : Split::Train))
      .bind(4, std::int64_t{annotation.image_size.width})
      .bind(5, std::int64_t{annotation.image_size.height})
      .bind(6, to_json(annotation).dump());
  s.run();
}

std::optional<StoredImage> ReviewStore::image(const std::string& image_id) const {
  std::lock_guard lock(mutex_);
  Stmt s(db_, "SELECT annotation, image_path, split FROM images WHERE id = ?");
  s.bind(1, image_id);
  if (!s.step()) return std::nullopt;
  StoredImage out;
  out.annotation = annotation_from_json(json::parse(s.text(0)));
  if (!s.is_null(1)) out.image_path = s.text(1);
  out.split = s.text(2) == to_string(Split::HeldOut) ? Split::HeldOut : Split::Train;
  return out;
}

std::vector<std::string> ReviewStore::image_ids() const {
  std::lock_guard lock(mutex_);
  Stmt s(db_, "SELECT id FROM images ORDER BY id");
  std::vector<std::string> out;
  while (s.step()) out.push_back(s.text(0));
  return out;
}

std::int64_t ReviewStore::insert_text(const GeneratedText& t) {
  std::lock_guard lock(mutex_);
  Tx tx(*this);
  const auto id = insert_row(t);
  tx.commit();
  return id;
}

std::int64_t ReviewStore::insert_row(const GeneratedText& t) {
  Stmt s(db_,
         "INSERT INTO texts(image_id, template_id, purpose, body, box_refs, generator_tag, status, attempt, seed, "
         "retry_count, parent_id, target, created_at, updated_at) VALUES(?,?,?,?,?,?,?,?,?,?,?,?,?,?)");
  const auto now = clock_();
  s.bind(1, t.image_id)
      .bind(2, t.template_id)
      .bind(3, to_string(t.purpose))
      .bind(4, t.text)
      .bind(5, box_refs_json(t))
      .bind(6, t.generator_tag)
      .bind(7, to_string(t.status))
      .bind(8, std::int64_t{t.attempt})
      .bind(9, std::to_string(t.seed))
      .bind(10, std::int64_t{t.retry_count})
      .bind(11, t.parent_id)
      .bind(12, t.target)
      .bind(13, now)
      .bind(14, now);
  s.run();
  const auto id = sqlite3_last_insert_rowid(db_);
  log_event(id, "generated", t.generator_tag, "", to_string(t.status), "");
  return id;
}

std::vector<GeneratedText> ReviewStore::query_texts(const std::string& sql, const std::vector<std::string>& args) const {
  std::lock_guard lock(mutex_);
  Stmt s(db_, sql);
  for (std::size_t i = 0; i < args.size(); ++i) s.bind(static_cast<int>(i + 1), args[i]);
  std::vector<GeneratedText> out;
  while (s.step()) out.push_back(read_text_row(s));
  return out;
}

std::optional<GeneratedText> ReviewStore::text(std::int64_t id) const {
  auto rows = query_texts(std::string("SELECT ") + kTextColumns + " FROM texts t JOIN images i ON i.id = t.image_id WHERE t.id = ?",
                          {std::to_string(id)});
  if (rows.empty()) return std::nullopt;
  return rows.front();
}

std::vector<GeneratedText> ReviewStore::texts_for(const std::string& image_id, const std::string& template_id) const {
  return query_texts(std::string("SELECT ") + kTextColumns +
                         " FROM texts t JOIN images i ON i.id = t.image_id WHERE t.image_id = ? AND t.template_id = ? "
                         "ORDER BY t.id",
                     {image_id, template_id});
}

bool ReviewStore::has_text(const std::string& image_id, const std::string& template_id) const {
  std::lock_guard lock(mutex_);
  Stmt s(db_, "SELECT 1 FROM texts WHERE image_id = ? AND template_id = ? LIMIT 1");
  s.bind(1, image_id).bind(2, template_id);
  return s.step();
}

std::vector<GeneratedText> ReviewStore::accepted_texts() const {
  return query_texts(std::string("SELECT ") + kTextColumns +
                         " FROM accepted_texts t JOIN images i ON i.id = t.image_id ORDER BY t.image_id, t.id",
                     {});
}

std::vector<GeneratedText> ReviewStore::all_texts() const {
  return query_texts(std::string("SELECT ") + kTextColumns + " FROM texts t JOIN images i ON i.id = t.image_id ORDER BY t.id",
                     {});
}

ReviewItem ReviewStore::review_item(std::int64_t id) const {
  std::lock_guard lock(mutex_);
  Stmt s(db_,
         "SELECT t.id, t.image_id, i.width, i.height, t.body, i.annotation, COALESCE(t.lease_expires, 0) "
         "FROM texts t JOIN images i ON i.id = t.image_id WHERE t.id = ?");
  s.bind(1, id);
  if (!s.step()) fail(Errc::NotFound, "no item " + std::to_string(id));
  ReviewItem item;
  item.id = s.int64(0);
  item.image_id = s.text(1);
  item.width = static_cast<int>(s.int64(2));
  item.height = static_cast<int>(s.int64(3));
  item.text = s.text(4);
  item.boxes = annotation_from_json(json::parse(s.text(5))).boxes;
  item.lease_expires_at_ms = s.int64(6);
  return item;
}

std::optional<ReviewItem> ReviewStore::lease_next(const std::string& reviewer, std::chrono::milliseconds lease) {
  if (reviewer.empty()) fail(Errc::InvalidArgument, "reviewer id required");
  std::lock_guard lock(mutex_);
  Tx tx(*this);
  const auto now = clock_();
  std::optional<std::int64_t> id;
  {
    Stmt own(db_,
             "SELECT id FROM texts WHERE status = 'pending_review' AND lease_owner = ? AND lease_expires > ? "
             "ORDER BY id LIMIT 1");
    own.bind(1, reviewer).bind(2, now);
    if (own.step()) id = own.int64(0);
  }
  if (!id) {
    Stmt next(db_,
              "SELECT id FROM texts WHERE status = 'pending_review' AND (lease_owner IS NULL OR lease_expires <= ?) "
              "ORDER BY id LIMIT 1");
    next.bind(1, now);
    if (next.step()) id = next.int64(0);
  }
  if (!id) return std::nullopt;
  Stmt upd(db_, "UPDATE texts SET lease_owner = ?, lease_expires = ?, updated_at = ? WHERE id = ?");
  upd.bind(1, reviewer).bind(2, now + lease.count()).bind(3, now).bind(4, *id);
  upd.run();
  log_event(*id, "leased", reviewer, "pending_review", "pending_review", "");
  tx.commit();
  return review_item(*id);
}

GeneratedText ReviewStore::decide(std::int64_t id, const std::string& reviewer, Decision decision, const std::string& note) {
  if (reviewer.empty()) fail(Errc::InvalidArgument, "reviewer id required");
  std::lock_guard lock(mutex_);
  Tx tx(*this);
  const auto now = clock_();
  std::string status;
  std::optional<std::string> owner;
  std::int64_t expires = 0;
  {
    Stmt s(db_, "SELECT status, lease_owner, COALESCE(lease_expires, 0) FROM texts WHERE id = ?");
    s.bind(1, id);
    if (!s.step()) fail(Errc::NotFound, "no item " + std::to_string(id));
    status = s.text(0);
    if (!s.is_null(1)) owner = s.text(1);
    expires = s.int64(2);
  }
  const auto item = std::to_string(id);
  if (status != to_string(TextStatus::PendingReview)) {
    fail(Errc::InvalidTransition, "item " + item + " is " + status + ", not pending_review");
  }
  if (owner && *owner != reviewer && expires > now) {
    fail(Errc::InvalidTransition, "item " + item + " is leased to another reviewer");
  }
  if (owner && *owner == reviewer && expires <= now) fail(Errc::InvalidTransition, "lease on item " + item + " expired");

  const TextStatus next = decision == Decision::Accept    ? TextStatus::Accepted
                          : decision == Decision::Discard ? TextStatus::Discarded
                                                          : TextStatus::RegenerateRequested;
  Stmt upd(db_,
           "UPDATE texts SET status = ?, lease_owner = NULL, lease_expires = NULL, updated_at = ? "
           "WHERE id = ? AND status = 'pending_review'");
  upd.bind(1, to_string(next)).bind(2, now).bind(3, id);
  upd.run();
  if (sqlite3_changes(db_) != 1) fail(Errc::InvalidTransition, "item " + item + " changed concurrently");
  log_event(id, "decided", reviewer, status, to_string(next), note);
  if (crash_hook_) crash_hook_("before_commit");
  tx.commit();
  if (crash_hook_) crash_hook_("after_commit");
  return *text(id);
}

std::vector<GeneratedText> ReviewStore::regeneration_queue() const {
  return query_texts(std::string("SELECT ") + kTextColumns +
                         " FROM texts t JOIN images i ON i.id = t.image_id "
                         "WHERE t.status = 'regenerate_requested' AND t.regen_done = 0 ORDER BY t.id",
                     {});
}

std::int64_t ReviewStore::fulfill_regeneration(std::int64_t old_id, GeneratedText replacement) {
  std::lock_guard lock(mutex_);
  Tx tx(*this);
  Stmt mark(db_, "UPDATE texts SET regen_done = 1 WHERE id = ? AND status = 'regenerate_requested' AND regen_done = 0");
  mark.bind(1, old_id);
  mark.run();
  if (sqlite3_changes(db_) != 1) {
    fail(Errc::InvalidTransition, "item " + std::to_string(old_id) + " has no open regeneration request");
  }
  replacement.parent_id = old_id;
  replacement.status = TextStatus::PendingReview;
  const auto new_id = insert_row(replacement);
  log_event(old_id, "regenerated", "", "regenerate_requested", "regenerate_requested", "replacement " + std::to_string(new_id));
  tx.commit();
  return new_id;
}

void ReviewStore::fail_regeneration(std::int64_t old_id, const std::string& reason) {
  std::lock_guard lock(mutex_);
  Tx tx(*this);
  Stmt mark(db_, "UPDATE texts SET regen_done = 1 WHERE id = ? AND status = 'regenerate_requested' AND regen_done = 0");
  mark.bind(1, old_id);
  mark.run();
  log_event(old_id, "regeneration_failed", "", "regenerate_requested", "regenerate_requested", reason);
  tx.commit();
}

StoreStats ReviewStore::stats() const {
  std::lock_guard lock(mutex_);
  StoreStats out;
  Stmt s(db_, "SELECT status, COUNT(*) FROM texts GROUP BY status");
  while (s.step()) out.by_status[parse_text_status(s.text(0))] = s.int64(1);
  Stmt r(db_, "SELECT COUNT(*) FROM texts WHERE status = 'regenerate_requested' AND regen_done = 0");
  if (r.step()) out.awaiting_regeneration = r.int64(0);
  return out;
}

std::vector<AuditEvent> ReviewStore::events(std::optional<std::int64_t> text_id) const {
  std::lock_guard lock(mutex_);
  Stmt s(db_, text_id ? "SELECT seq, text_id, kind, actor, from_status, to_status, note, at FROM events WHERE text_id = ? ORDER BY seq"
                      : "SELECT seq, text_id, kind, actor, from_status, to_status, note, at FROM events ORDER BY seq");
  if (text_id) s.bind(1, *text_id);
  std::vector<AuditEvent> out;
  while (s.step()) {
    out.push_back({s.int64(0), s.int64(1), s.text(2), s.text(3), s.text(4), s.text(5), s.text(6), s.int64(7)});
  }
  return out;
}

}  // namespace fundus::expansion
