#include "fundus/service/config.hpp"

#include <fstream>
#include <set>

#include "fundus/core/error.hpp"

namespace fundus::service {

namespace {

namespace fs = std::filesystem;

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) fail(Errc::ParseError, where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items())
    if (!ok.count(key)) fail(Errc::ParseError, "unknown key '" + key + "' in " + where);
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_relative() ? (base / path).lexically_normal() : path;
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

std::optional<fs::path> optional_path(const json& obj, const char* key, const fs::path& base) {
  if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
  return resolve(base, obj.at(key).get<std::string>());
}

fs::path required_path(const json& obj, const char* key, const fs::path& base, const std::string& where) {
  if (!obj.contains(key)) fail(Errc::MissingField, where + "." + key + " is required");
  return resolve(base, obj.at(key).get<std::string>());
}

}  // namespace

std::string to_string(QcMode mode) { return mode == QcMode::Human ? "human" : "auto_accept"; }

Config Config::from_json(const json& j, const fs::path& base) {
  try {
    check_keys(j, {"paths", "boxgen", "selftrain", "expand", "qc", "curate", "serve", "eval"}, "config");
    Config c;

    if (!j.contains("paths")) fail(Errc::MissingField, "paths is required");
    const auto& p = j.at("paths");
    check_keys(p, {"manifest", "masks", "work", "store", "vocabulary", "templates", "rules", "static_dir"}, "paths");
    c.paths.manifest = required_path(p, "manifest", base, "paths");
    c.paths.masks = required_path(p, "masks", base, "paths");
    c.paths.work = required_path(p, "work", base, "paths");
    c.paths.store = optional_path(p, "store", base).value_or(c.paths.work / "review.db");
    c.paths.vocabulary = optional_path(p, "vocabulary", base);
    c.paths.templates = optional_path(p, "templates", base);
    c.paths.rules = optional_path(p, "rules", base);
    c.paths.static_dir = optional_path(p, "static_dir", base);

    if (j.contains("boxgen")) {
      const auto& b = j.at("boxgen");
      check_keys(b, {"epsilon", "min_samples", "area_threshold", "max_boxes", "threshold_mode", "downsample", "concurrency"},
                 "boxgen");
      auto& cp = c.boxgen.cluster;
      read(b, "epsilon", cp.epsilon);
      read(b, "min_samples", cp.min_samples);
      read(b, "area_threshold", cp.area_threshold);
      read(b, "max_boxes", cp.max_boxes);
      read(b, "downsample", cp.downsample);
      if (b.contains("threshold_mode")) cp.threshold_mode = boxgen::parse_threshold_mode(b.at("threshold_mode").get<std::string>());
      read(b, "concurrency", c.boxgen.concurrency);
      cp.validate();
    }

    if (j.contains("selftrain")) {
      const auto& s = j.at("selftrain");
      check_keys(s, {"enabled", "segmenter", "rounds", "min_foreground", "max_per_image", "predict_batch", "max_in_flight",
                     "timeout_s"},
                 "selftrain");
      auto& st = c.selftrain;
      read(s, "enabled", st.enabled);
      read(s, "segmenter", st.segmenter);
      read(s, "rounds", st.rounds);
      read(s, "min_foreground", st.policy.min_foreground);
      read(s, "max_per_image", st.policy.max_per_image);
      read(s, "predict_batch", st.predict_batch);
      read(s, "max_in_flight", st.max_in_flight);
      if (s.contains("timeout_s")) st.timeout = std::chrono::milliseconds(static_cast<long>(s.at("timeout_s").get<double>() * 1000));
      if (st.enabled && st.segmenter.empty()) fail(Errc::MissingField, "selftrain.segmenter is required when enabled");
      if (st.rounds < 1) fail(Errc::InvalidArgument, "selftrain.rounds must be >= 1");
    }

    if (!j.contains("expand")) fail(Errc::MissingField, "expand is required");
    const auto& e = j.at("expand");
    check_keys(e, {"adapter", "templates", "retries", "temperature", "seed", "concurrency"}, "expand");
    if (!e.contains("seed")) fail(Errc::MissingField, "expand.seed is required");
    read(e, "adapter", c.expand.adapter);
    read(e, "templates", c.expand.templates);
    read(e, "retries", c.expand.retries);
    read(e, "temperature", c.expand.temperature);
    read(e, "seed", c.expand.seed);
    read(e, "concurrency", c.expand.concurrency);
    if (c.expand.retries < 0) fail(Errc::InvalidArgument, "expand.retries must be >= 0");

    if (j.contains("qc")) {
      const auto& q = j.at("qc");
      check_keys(q, {"mode", "lease_minutes"}, "qc");
      if (q.contains("mode")) {
        const auto mode = q.at("mode").get<std::string>();
        if (mode == "human") c.qc.mode = QcMode::Human;
        else if (mode == "auto_accept") c.qc.mode = QcMode::AutoAccept;
        else fail(Errc::InvalidArgument, "qc.mode must be human or auto_accept");
      }
      if (q.contains("lease_minutes"))
        c.qc.lease = std::chrono::milliseconds(static_cast<long>(q.at("lease_minutes").get<double>() * 60000));
      if (c.qc.lease.count() <= 0) fail(Errc::InvalidArgument, "qc.lease_minutes must be positive");
    }

    if (!j.contains("curate")) fail(Errc::MissingField, "curate is required");
    const auto& cu = j.at("curate");
    check_keys(cu, {"recipe", "output"}, "curate");
    if (!cu.contains("recipe")) fail(Errc::MissingField, "curate.recipe is required");
    const auto& r = cu.at("recipe");
    c.curate.recipe = r.is_string() ? curator::load_recipe(resolve(base, r.get<std::string>()))
                                    : curator::dataset_recipe_from_json(r);
    read(cu, "output", c.curate.output);

    if (j.contains("serve")) {
      const auto& s = j.at("serve");
      check_keys(s, {"bind", "port", "regen_interval_ms"}, "serve");
      read(s, "bind", c.serve.bind);
      read(s, "port", c.serve.port);
      if (s.contains("regen_interval_ms")) c.serve.regen_interval = std::chrono::milliseconds(s.at("regen_interval_ms").get<long>());
    }

    if (j.contains("eval")) {
      const auto& ev = j.at("eval");
      check_keys(ev, {"target", "judge", "retry_budget", "concurrency"}, "eval");
      read(ev, "target", c.eval.target);
      read(ev, "judge", c.eval.judge);
      read(ev, "retry_budget", c.eval.retry_budget);
      read(ev, "concurrency", c.eval.concurrency);
    }
    return c;
  } catch (const json::exception& ex) {
    fail(Errc::ParseError, std::string("config: ") + ex.what());
  }
}

Config Config::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::NotFound, "config file " + path.string() + " not found");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(Errc::ParseError, path.string() + ": " + e.what());
  }
  auto c = from_json(j, fs::absolute(path).parent_path());
  c.source = path;
  c.check_paths();
  return c;
}

void Config::check_paths() const {
  auto need_file = [](const fs::path& p, const char* what) {
    if (!fs::is_regular_file(p)) fail(Errc::NotFound, std::string(what) + " " + p.string() + " does not exist");
  };
  auto need_dir = [](const fs::path& p, const char* what) {
    if (!fs::is_directory(p)) fail(Errc::NotFound, std::string(what) + " " + p.string() + " is not a directory");
  };
  need_file(paths.manifest, "manifest");
  need_dir(paths.masks, "masks directory");
  if (paths.vocabulary) need_file(*paths.vocabulary, "vocabulary");
  if (paths.templates) need_file(*paths.templates, "templates");
  if (paths.rules) need_file(*paths.rules, "rules");
  if (paths.static_dir) need_dir(*paths.static_dir, "static_dir");
}

}  // namespace fundus::service
