#include "fundus/selftrain/segmenter.hpp"

#include <httplib.h>

#include <fstream>
#include <set>

#include "fundus/core/error.hpp"
#include "fundus/core/manifest.hpp"
#include "fundus/core/process.hpp"
#include "fundus/core/vocabulary.hpp"

namespace fundus::selftrain {

namespace {

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::IoError, "cannot write " + path.string());
  for (const auto& r : rows) out << r.dump() << '\n';
}

std::string tail(const std::string& text, std::size_t n = 400) {
  return text.size() <= n ? text : text.substr(text.size() - n);
}

}  // namespace

json labeled_example_to_json(const LabeledExample& e) {
  json j = to_json(e.mask);
  j["image_path"] = e.image.resolved_image_path.generic_string();
  j["width"] = e.image.width;
  j["height"] = e.image.height;
  return j;
}

json image_ref_to_json(const ImageRecord& image) {
  return {{"id", image.id},
          {"image_path", image.resolved_image_path.generic_string()},
          {"width", image.width},
          {"height", image.height}};
}

std::vector<PredictedMask> collect_predictions(const std::vector<ImageRecord>& images,
                                               const std::filesystem::path& out_dir) {
  std::vector<PredictedMask> out;
  for (const auto& image : images) {
    for (Category c : kAllCategories) {
      auto p = mask_path_for(out_dir, image.id, c);
      if (std::filesystem::exists(p)) out.push_back({image.id, c, p});
    }
  }
  return out;
}

SubprocessSegmenter::SubprocessSegmenter(std::string command, std::chrono::milliseconds timeout)
    : argv_(split_command(command)), timeout_(timeout) {
  if (argv_.empty()) fail(Errc::InvalidArgument, "empty segmenter command");
}

void SubprocessSegmenter::run(std::vector<std::string> args, const char* stage) const {
  std::vector<std::string> argv = argv_;
  argv.insert(argv.end(), args.begin(), args.end());
  const auto result = run_process(argv, timeout_);
  if (result.timed_out) fail(Errc::AdapterFailure, std::string("segmenter ") + stage + " timed out");
  if (result.exit_code != 0) {
    fail(Errc::AdapterFailure, std::string("segmenter ") + stage + " exited with " +
                                   std::to_string(result.exit_code) + ": " + tail(result.output));
  }
}

ModelHandle SubprocessSegmenter::train(const std::vector<LabeledExample>& labeled,
                                       const std::filesystem::path& workdir) {
  const auto labeled_dir = workdir / "labeled";
  const auto model = workdir / "model";
  std::vector<json> rows;
  rows.reserve(labeled.size());
  for (const auto& e : labeled) rows.push_back(labeled_example_to_json(e));
  write_jsonl(labeled_dir / "labels.jsonl", rows);
  run({"train", "--labeled", labeled_dir.string(), "--out", model.string()}, "train");
  return {model.string()};
}

std::vector<PredictedMask> SubprocessSegmenter::predict(const ModelHandle& model,
                                                        const std::vector<ImageRecord>& images,
                                                        const std::filesystem::path& out_dir) {
  const auto list = out_dir / "images.jsonl";
  const auto masks = out_dir / "masks";
  std::vector<json> rows;
  for (const auto& image : images) rows.push_back(image_ref_to_json(image));
  write_jsonl(list, rows);
  std::filesystem::create_directories(masks);
  run({"predict", "--model", model.id, "--images", list.string(), "--out", masks.string()}, "predict");
  return collect_predictions(images, masks);
}

HttpSegmenter::HttpSegmenter(std::string base_url, std::chrono::milliseconds timeout)
    : base_url_(std::move(base_url)), timeout_(timeout) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

json HttpSegmenter::post(const std::string& path, const json& body) const {
  httplib::Client client(base_url_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  client.set_connection_timeout(secs.count(), usecs.count());
  auto res = client.Post(path, body.dump(), "application/json");
  if (!res) fail(Errc::AdapterFailure, "segmenter " + path + ": " + httplib::to_string(res.error()));
  if (res->status != 200) {
    fail(Errc::AdapterFailure, "segmenter " + path + " returned HTTP " + std::to_string(res->status));
  }
  try {
    return json::parse(res->body);
  } catch (const json::exception& e) {
    fail(Errc::AdapterFailure, "segmenter " + path + " sent invalid JSON: " + e.what());
  }
}

ModelHandle HttpSegmenter::train(const std::vector<LabeledExample>& labeled,
                                 const std::filesystem::path& workdir) {
  json items = json::array();
  for (const auto& e : labeled) items.push_back(labeled_example_to_json(e));
  std::filesystem::create_directories(workdir);
  const auto reply = post("/train", {{"labeled", items}, {"out", (workdir / "model").string()}});
  if (!reply.contains("model") || !reply["model"].is_string()) {
    fail(Errc::AdapterFailure, "segmenter /train reply lacks a model id");
  }
  return {reply["model"].get<std::string>()};
}

std::vector<PredictedMask> HttpSegmenter::predict(const ModelHandle& model,
                                                  const std::vector<ImageRecord>& images,
                                                  const std::filesystem::path& out_dir) {
  json items = json::array();
  for (const auto& image : images) items.push_back(image_ref_to_json(image));
  std::filesystem::create_directories(out_dir);
  const auto reply = post("/predict", {{"model", model.id}, {"images", items}, {"out", out_dir.string()}});
  if (!reply.contains("masks")) return collect_predictions(images, out_dir);
  std::set<std::string> requested;
  for (const auto& image : images) requested.insert(image.id);
  std::vector<PredictedMask> out;
  try {
    for (const auto& m : reply.at("masks")) {
      auto c = parse_category(m.at("category").get<std::string>());
      const auto id = m.at("image_id").get<std::string>();
      if (!c || !requested.count(id)) fail(Errc::AdapterFailure, "segmenter returned an unexpected mask");
      out.push_back({id, *c, m.at("mask_path").get<std::string>()});
    }
  } catch (const json::exception& e) {
    fail(Errc::AdapterFailure, std::string("segmenter /predict reply: ") + e.what());
  }
  return out;
}

SubprocessQualityFilter::SubprocessQualityFilter(std::string command, std::filesystem::path workdir,
                                                 std::chrono::milliseconds timeout)
    : argv_(split_command(command)), workdir_(std::move(workdir)), timeout_(timeout) {
  if (argv_.empty()) fail(Errc::InvalidArgument, "empty quality filter command");
}

std::vector<ImageRecord> SubprocessQualityFilter::filter(const std::vector<ImageRecord>& images) {
  const auto list = workdir_ / "quality_input.jsonl";
  const auto kept = workdir_ / "quality_kept.txt";
  std::vector<json> rows;
  for (const auto& image : images) rows.push_back(image_ref_to_json(image));
  write_jsonl(list, rows);
  std::filesystem::remove(kept);
  auto argv = argv_;
  argv.insert(argv.end(), {"--images", list.string(), "--out", kept.string()});
  const auto result = run_process(argv, timeout_);
  if (result.timed_out || result.exit_code != 0) {
    fail(Errc::AdapterFailure, "quality filter failed: " + tail(result.output));
  }
  std::ifstream in(kept);
  if (!in) fail(Errc::AdapterFailure, "quality filter produced no " + kept.string());
  std::set<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (auto id = trim(line); !id.empty()) ids.insert(id);
  }
  std::vector<ImageRecord> out;
  for (const auto& image : images) {
    if (ids.count(image.id)) out.push_back(image);
  }
  return out;
}

}  // namespace fundus::selftrain
