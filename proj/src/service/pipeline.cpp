#include "fundus/service/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "fundus/boxgen/boxgen.hpp"
#include "fundus/core/annotation_io.hpp"
#include "fundus/core/category.hpp"
#include "fundus/core/error.hpp"
#include "fundus/core/hash.hpp"
#include "fundus/core/manifest.hpp"
#include "fundus/curator/dataset.hpp"
#include "fundus/eval/report.hpp"
#include "fundus/expansion/expander.hpp"
#include "fundus/expansion/review_store.hpp"
#include "fundus/selftrain/ood_report.hpp"
#include "fundus/service/adapter_spec.hpp"

namespace fundus::service {

namespace fs = std::filesystem;

// Bumped when a stage's behaviour changes in a way that invalidates old
// checkpoints.
constexpr const char* kStateVersion = "fundus-pipeline-1";

Resources Resources::load(const Config& config) {
  return {config.paths.vocabulary ? DiseaseVocabulary::load(*config.paths.vocabulary) : DiseaseVocabulary::builtin(),
          config.paths.templates ? expansion::TemplateBank::load(*config.paths.templates)
                                 : expansion::TemplateBank::builtin(),
          config.paths.rules ? curator::RuleBank::load(*config.paths.rules) : curator::RuleBank::builtin()};
}

std::string hash_tree(const fs::path& dir) {
  if (!fs::is_directory(dir)) return {};
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  Sha256 h;
  for (const auto& f : files) {
    const auto rel = fs::relative(f, dir).generic_string();
    h.update(rel).update(std::string_view("\0", 1));
    h.update(sha256_file(f)).update("\n");
  }
  return h.hex();
}

json PipelineReport::to_json() const {
  json rows = json::array();
  for (const auto& s : stages) {
    rows.push_back({{"stage", s.name},
                    {"action", s.action},
                    {"reason", s.reason},
                    {"input_hash", s.input_hash},
                    {"output_hash", s.output_hash},
                    {"seconds", s.seconds},
                    {"details", s.details}});
  }
  return {{"dry_run", dry_run}, {"stages", rows}};
}

std::string PipelineReport::plan_text() const {
  std::string out;
  for (const auto& s : stages) out += s.name + ": " + s.action + (s.reason.empty() ? "" : " (" + s.reason + ")") + "\n";
  return out;
}

namespace {

std::string file_hash_or_empty(const std::optional<fs::path>& p) { return p ? sha256_file(*p) : std::string("builtin"); }

json cluster_json(const boxgen::ClusterParams& p) {
  return {{"epsilon", p.epsilon},
          {"min_samples", p.min_samples},
          {"area_threshold", p.area_threshold},
          {"max_boxes", p.max_boxes},
          {"threshold_mode", boxgen::to_string(p.threshold_mode)},
          {"downsample", p.downsample}};
}

std::string fingerprint(const json& parts) { return sha256_hex(std::string(kStateVersion) + "\n" + parts.dump()); }

json load_state(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return json::object();
  try {
    auto j = json::parse(in);
    if (j.is_object() && j.value("version", std::string{}) == kStateVersion && j.contains("stages") &&
        j["stages"].is_object())
      return j["stages"];
  } catch (const json::exception&) {
  }
  // An unreadable checkpoint only costs a rerun.
  return json::object();
}

struct Stage {
  std::string name;
  std::function<std::string()> input_hash;
  std::function<std::string()> output_hash;
  std::function<json()> run;
};

class Pipeline {
 public:
  Pipeline(const Config& config, const PipelineOptions& options)
      : config_(config), options_(options), work_(config.paths.work), resources_(Resources::load(config)) {}

  PipelineReport execute();

 private:
  std::vector<ImageRecord> records() const {
    ManifestOptions mo;
    mo.vocabulary = &resources_.vocabulary;
    return load_manifest(config_.paths.manifest, mo);
  }

  expansion::ReviewStore& store() {
    if (!store_) store_ = std::make_unique<expansion::ReviewStore>(config_.paths.store);
    return *store_;
  }

  std::string store_fingerprint() {
    if (!fs::exists(config_.paths.store)) return {};
    Sha256 h;
    for (const auto& id : store().image_ids()) h.update(id).update("\n");
    for (const auto& t : store().all_texts()) h.update(expansion::to_json(t).dump()).update("\n");
    return h.hex();
  }

  fs::path annotations_dir() const {
    return config_.selftrain.enabled ? work_ / "selftrain" / "annotations" : work_ / "annotations";
  }

  json run_boxgen();
  json run_selftrain();
  json run_expand();
  json run_curate();

  void log(const std::string& line) {
    if (options_.log) *options_.log << line << std::endl;
  }

  const Config& config_;
  const PipelineOptions& options_;
  fs::path work_;
  Resources resources_;
  std::unique_ptr<expansion::ReviewStore> store_;
  std::map<std::string, std::string> outputs_;
};

json Pipeline::run_boxgen() {
  const auto out = work_ / "annotations";
  fs::remove_all(out);
  const auto recs = records();
  const auto summary = boxgen::run_boxgen(recs, config_.paths.masks, out, config_.boxgen.cluster,
                                          config_.boxgen.concurrency);
  json per_cat = json::object();
  for (const auto& [c, n] : summary.boxes_per_category) per_cat[std::string(code(c))] = n;
  return {{"images", summary.images}, {"masks", summary.masks}, {"boxes", per_cat}};
}

json Pipeline::run_selftrain() {
  const auto root = work_ / "selftrain";
  fs::remove_all(root);
  fs::create_directories(root);
  const auto recs = records();
  const auto catalog = selftrain::make_catalog(recs);

  std::vector<SegMask> truth;
  std::vector<ImageRecord> unlabeled;
  selftrain::TestSet test;
  for (const auto& r : recs) {
    auto masks = discover_masks(config_.paths.masks, r);
    if (r.split == Split::HeldOut) {
      if (!masks.empty()) {
        test.images.push_back(r);
        test.truth.insert(test.truth.end(), masks.begin(), masks.end());
      }
    } else if (masks.empty()) {
      unlabeled.push_back(r);
    } else {
      truth.insert(truth.end(), masks.begin(), masks.end());
    }
  }

  auto segmenter = make_segmenter(config_.selftrain.segmenter, config_.selftrain.timeout);
  selftrain::RoundOptions ro;
  ro.policy = config_.selftrain.policy;
  ro.workdir = root / "rounds";
  ro.predict_batch = config_.selftrain.predict_batch;
  ro.max_in_flight = config_.selftrain.max_in_flight;
  if (!test.images.empty()) ro.evaluation = &test;
  const auto states = selftrain::self_train(selftrain::initial_state(truth), unlabeled, catalog, *segmenter,
                                            config_.selftrain.rounds, ro);
  eval::write_json_file(root / "label_ledger.json", selftrain::label_ledger(states));

  json details = {{"rounds", config_.selftrain.rounds},
                  {"true_labels", truth.size()},
                  {"unlabeled_images", unlabeled.size()},
                  {"final_pool", states.back().labeled.size()}};
  if (!test.images.empty()) {
    const auto report = selftrain::evaluate_ood(states, test, catalog, *segmenter, root / "ood");
    eval::write_json_file(root / "ood_report.json", report.to_json());
    eval::write_text_file(root / "ood_report.csv", report.to_csv());
    eval::write_text_file(root / "ood_report.txt", report.to_table());
    details["ood_test_images"] = test.images.size();
  }

  std::map<std::string, std::vector<SegMask>> pool;
  for (const auto& m : states.back().labeled) pool[m.image_id].push_back(m);
  const auto out = root / "annotations";
  for (const auto& r : recs) {
    const auto masks = r.split == Split::HeldOut ? discover_masks(config_.paths.masks, r) : pool[r.id];
    write_annotation(out, boxgen::annotate_image(r, masks, config_.boxgen.cluster));
  }
  return details;
}

json Pipeline::run_expand() {
  std::map<std::string, ImageRecord> by_id;
  for (auto& r : records()) by_id.emplace(r.id, r);
  const auto annotations = read_annotations(annotations_dir());
  auto& s = store();
  std::vector<StructuredAnnotation> train;
  for (const auto& a : annotations) {
    auto it = by_id.find(a.image_id);
    if (it == by_id.end()) fail(Errc::NotFound, "annotation for unknown image " + a.image_id);
    s.put_image(a, it->second);
    if (it->second.split == Split::Train) train.push_back(a);
  }

  ChatSpecOptions co;
  co.log_path = work_ / "expand" / "chat_log.jsonl";
  auto adapter = make_chat_adapter(config_.expand.adapter, co);
  expansion::ExpandOptions eo;
  eo.template_ids = config_.expand.templates;
  eo.concurrency = config_.expand.concurrency;
  eo.generation.retries = config_.expand.retries;
  eo.generation.temperature = config_.expand.temperature;
  eo.generation.base_seed = config_.expand.seed;
  const auto summary = expansion::expand_corpus(train, resources_.templates, resources_.vocabulary, *adapter, s, eo);

  std::size_t auto_accepted = 0;
  if (config_.qc.mode == QcMode::AutoAccept) {
    for (const auto& t : s.all_texts()) {
      if (t.status != expansion::TextStatus::PendingReview) continue;
      s.decide(t.id, "auto_accept", expansion::Decision::Accept, "qc.mode=auto_accept");
      ++auto_accepted;
    }
  }
  json details = summary.to_json();
  details["qc_mode"] = to_string(config_.qc.mode);
  details["auto_accepted"] = auto_accepted;
  details["stats"] = s.stats().to_json();
  return details;
}

json Pipeline::run_curate() {
  const auto dataset = curator::build_dataset(config_.curate.recipe, store(), resources_.vocabulary, resources_.rules);
  curator::write_jsonl(work_ / config_.curate.output, dataset.samples);
  const auto composition = dataset.composition.to_json(config_.curate.recipe);
  eval::write_json_file(work_ / "composition.json", composition);
  return composition;
}

PipelineReport Pipeline::execute() {
  PipelineReport report;
  report.dry_run = options_.dry_run;
  const auto state_path = work_ / "pipeline_state.json";
  json state = load_state(state_path);

  std::vector<Stage> stages;
  stages.push_back({"boxgen",
                    [&] {
                      return fingerprint({{"cluster", cluster_json(config_.boxgen.cluster)},
                                          {"manifest", sha256_file(config_.paths.manifest)},
                                          {"masks", hash_tree(config_.paths.masks)},
                                          {"vocabulary", file_hash_or_empty(config_.paths.vocabulary)}});
                    },
                    [&] { return hash_tree(work_ / "annotations"); }, [&] { return run_boxgen(); }});
  if (config_.selftrain.enabled) {
    stages.push_back({"selftrain",
                      [&] {
                        const auto& st = config_.selftrain;
                        return fingerprint({{"segmenter", st.segmenter},
                                            {"rounds", st.rounds},
                                            {"min_foreground", st.policy.min_foreground},
                                            {"max_per_image", st.policy.max_per_image},
                                            {"boxgen", outputs_["boxgen"]},
                                            {"manifest", sha256_file(config_.paths.manifest)},
                                            {"masks", hash_tree(config_.paths.masks)}});
                      },
                      [&] { return hash_tree(work_ / "selftrain"); }, [&] { return run_selftrain(); }});
  }
  stages.push_back({"expand",
                    [&] {
                      const auto& e = config_.expand;
                      return fingerprint({{"adapter", e.adapter},
                                          {"templates", e.templates},
                                          {"retries", e.retries},
                                          {"temperature", e.temperature},
                                          {"seed", e.seed},
                                          {"qc", to_string(config_.qc.mode)},
                                          {"annotations", outputs_[config_.selftrain.enabled ? "selftrain" : "boxgen"]},
                                          {"manifest", sha256_file(config_.paths.manifest)},
                                          {"template_bank", file_hash_or_empty(config_.paths.templates)},
                                          {"vocabulary", file_hash_or_empty(config_.paths.vocabulary)}});
                    },
                    [&] { return store_fingerprint(); }, [&] { return run_expand(); }});
  stages.push_back({"curate",
                    [&] {
                      return fingerprint({{"recipe", curator::to_json(config_.curate.recipe)},
                                          {"output", config_.curate.output},
                                          {"store", outputs_["expand"]},
                                          {"rules", file_hash_or_empty(config_.paths.rules)},
                                          {"vocabulary", file_hash_or_empty(config_.paths.vocabulary)}});
                    },
                    [&] {
                      const auto data = work_ / config_.curate.output;
                      const auto comp = work_ / "composition.json";
                      if (!fs::is_regular_file(data) || !fs::is_regular_file(comp)) return std::string{};
                      return Sha256().update(sha256_file(data)).update(sha256_file(comp)).hex();
                    },
                    [&] { return run_curate(); }});

  bool upstream_pending = false;
  for (auto& stage : stages) {
    StageReport r;
    r.name = stage.name;
    try {
      if (upstream_pending) {
        r.action = "would_run";
        r.reason = "an earlier stage would run";
        report.stages.push_back(r);
        continue;
      }
      r.input_hash = stage.input_hash();
      const auto current = stage.output_hash();
      const json recorded = state.value(stage.name, json::object());
      const bool same_input = recorded.value("input", std::string{}) == r.input_hash;
      const bool same_output = !current.empty() && recorded.value("output", std::string{}) == current;
      if (same_input && same_output) {
        r.action = "skip";
        r.reason = "unchanged";
        r.output_hash = current;
        outputs_[stage.name] = current;
        log("[" + stage.name + "] skip (unchanged)");
        report.stages.push_back(r);
        continue;
      }
      r.reason = !recorded.contains("input") ? "no checkpoint"
                 : !same_input               ? "inputs changed"
                 : current.empty()           ? "outputs missing"
                                             : "outputs changed";
      if (options_.dry_run) {
        r.action = "would_run";
        upstream_pending = true;
        report.stages.push_back(r);
        continue;
      }
      log("[" + stage.name + "] run (" + r.reason + ")");
      const auto start = std::chrono::steady_clock::now();
      fs::create_directories(work_);
      r.details = stage.run();
      r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      r.output_hash = stage.output_hash();
      r.action = "run";
      outputs_[stage.name] = r.output_hash;
      state[stage.name] = {{"input", r.input_hash}, {"output", r.output_hash}};
      eval::write_json_file(state_path, {{"version", kStateVersion}, {"stages", state}});
      report.stages.push_back(r);
    } catch (const Error& e) {
      // what() already starts with the code name; keep it once.
      std::string message = e.what();
      const std::string prefix = std::string(to_string(e.code())) + ": ";
      if (message.rfind(prefix, 0) == 0) message.erase(0, prefix.size());
      throw Error(e.code(), "stage " + stage.name + ": " + message);
    } catch (const std::exception& e) {
      throw Error(Errc::IoError, "stage " + stage.name + ": " + e.what());
    }
  }
  if (!options_.dry_run) eval::write_json_file(work_ / "run_summary.json", report.to_json());
  return report;
}

}  // namespace

PipelineReport run_pipeline(const Config& config, const PipelineOptions& options) {
  return Pipeline(config, options).execute();
}

}  // namespace fundus::service
