#include <CLI11.hpp>

#include <csignal>
#include <iostream>
#include <map>
#include <pthread.h>
#include <thread>

#include "fundus/boxgen/boxgen.hpp"
#include "fundus/core/annotation_io.hpp"
#include "fundus/core/category.hpp"
#include "fundus/core/error.hpp"
#include "fundus/core/manifest.hpp"
#include "fundus/curator/dataset.hpp"
#include "fundus/eval/consistency.hpp"
#include "fundus/eval/localization.hpp"
#include "fundus/eval/mcq.hpp"
#include "fundus/eval/report.hpp"
#include "fundus/eval/scaling.hpp"
#include "fundus/expansion/expander.hpp"
#include "fundus/selftrain/ood_report.hpp"
#include "fundus/service/adapter_spec.hpp"
#include "fundus/service/pipeline.hpp"
#include "fundus/service/regen_worker.hpp"
#include "fundus/service/review_server.hpp"

using namespace fundus;
namespace fs = std::filesystem;

namespace {

DiseaseVocabulary vocabulary_from(const std::string& path) {
  return path.empty() ? DiseaseVocabulary::builtin() : DiseaseVocabulary::load(path);
}

std::vector<ImageRecord> manifest_from(const std::string& path, const DiseaseVocabulary& vocab) {
  ManifestOptions mo;
  mo.vocabulary = &vocab;
  return load_manifest(path, mo);
}

void write_report(const fs::path& out, const json& doc, const std::string& csv) {
  eval::write_json_file(out, doc);
  if (!csv.empty()) eval::write_text_file(eval::csv_path_for(out), csv);
}

// Blocks SIGINT/SIGTERM in every thread and waits for one on a helper
// thread, then runs `on_signal`.
std::thread signal_waiter(std::function<void()> on_signal) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  return std::thread([set, on_signal = std::move(on_signal)] {
    int sig = 0;
    sigwait(&set, &sig);
    on_signal();
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fundus annotation pipeline and evaluation suite"};
  app.require_subcommand(1);

  // boxgen
  auto* boxgen_cmd = app.add_subcommand("boxgen", "Convert segmentation masks into bounding-box annotations");
  std::string bg_manifest, bg_masks, bg_out, bg_vocab, bg_mode = "box_area";
  boxgen::ClusterParams bg_params;
  std::size_t bg_concurrency = 4;
  boxgen_cmd->add_option("--manifest", bg_manifest, "JSONL manifest")->required()->check(CLI::ExistingFile);
  boxgen_cmd->add_option("--masks", bg_masks, "masks/<image_id>/<CODE>.png root")->required()->check(CLI::ExistingDirectory);
  boxgen_cmd->add_option("--out", bg_out, "annotation output directory")->required();
  boxgen_cmd->add_option("--vocabulary", bg_vocab)->check(CLI::ExistingFile);
  boxgen_cmd->add_option("--epsilon", bg_params.epsilon)->capture_default_str();
  boxgen_cmd->add_option("--min-samples", bg_params.min_samples)->capture_default_str();
  boxgen_cmd->add_option("--area-threshold", bg_params.area_threshold)->capture_default_str();
  boxgen_cmd->add_option("--max-boxes", bg_params.max_boxes)->capture_default_str();
  boxgen_cmd->add_option("--threshold-mode", bg_mode, "box_area or cluster_size")->capture_default_str();
  boxgen_cmd->add_option("--downsample", bg_params.downsample)->capture_default_str();
  boxgen_cmd->add_option("--concurrency", bg_concurrency)->capture_default_str();

  // selftrain
  auto* st_cmd = app.add_subcommand("selftrain", "Run pseudo-label self-training rounds");
  std::string st_manifest, st_masks, st_work, st_segmenter, st_vocab;
  int st_rounds = 2;
  double st_timeout_s = 600;
  selftrain::AcceptPolicy st_policy;
  st_cmd->add_option("--manifest", st_manifest)->required()->check(CLI::ExistingFile);
  st_cmd->add_option("--masks", st_masks, "true-label masks root")->required()->check(CLI::ExistingDirectory);
  st_cmd->add_option("--work", st_work, "output directory")->required();
  st_cmd->add_option("--segmenter", st_segmenter, "subprocess:<command> or URL")->required();
  st_cmd->add_option("--rounds", st_rounds)->capture_default_str();
  st_cmd->add_option("--min-foreground", st_policy.min_foreground)->capture_default_str();
  st_cmd->add_option("--max-per-image", st_policy.max_per_image)->capture_default_str();
  st_cmd->add_option("--timeout", st_timeout_s, "seconds per segmenter call")->capture_default_str();
  st_cmd->add_option("--vocabulary", st_vocab)->check(CLI::ExistingFile);

  // expand
  auto* ex_cmd = app.add_subcommand("expand", "Generate pending texts into the review store");
  std::string ex_annotations, ex_manifest, ex_store, ex_adapter = "stub:expander", ex_templates, ex_vocab;
  std::vector<std::string> ex_template_ids;
  expansion::GenerateOptions ex_gen;
  std::size_t ex_concurrency = 4;
  std::uint64_t ex_seed = 0;
  ex_cmd->add_option("--annotations", ex_annotations)->required()->check(CLI::ExistingDirectory);
  ex_cmd->add_option("--manifest", ex_manifest, "registers image paths and splits")->check(CLI::ExistingFile);
  ex_cmd->add_option("--store", ex_store)->required();
  ex_cmd->add_option("--adapter", ex_adapter)->capture_default_str();
  ex_cmd->add_option("--seed", ex_seed)->required();
  ex_cmd->add_option("--template", ex_template_ids, "template ids (default: all)");
  ex_cmd->add_option("--templates", ex_templates, "template bank JSON")->check(CLI::ExistingFile);
  ex_cmd->add_option("--vocabulary", ex_vocab)->check(CLI::ExistingFile);
  ex_cmd->add_option("--retries", ex_gen.retries)->capture_default_str();
  ex_cmd->add_option("--temperature", ex_gen.temperature)->capture_default_str();
  ex_cmd->add_option("--concurrency", ex_concurrency)->capture_default_str();

  // curate
  auto* cu_cmd = app.add_subcommand("curate", "Assemble an instruction dataset from accepted texts");
  std::string cu_recipe, cu_store, cu_out, cu_rules, cu_vocab;
  cu_cmd->add_option("--recipe", cu_recipe)->required()->check(CLI::ExistingFile);
  cu_cmd->add_option("--store", cu_store)->required()->check(CLI::ExistingFile);
  cu_cmd->add_option("--out", cu_out, "dataset JSONL")->required();
  cu_cmd->add_option("--rules", cu_rules)->check(CLI::ExistingFile);
  cu_cmd->add_option("--vocabulary", cu_vocab)->check(CLI::ExistingFile);

  // eval
  auto* ev_cmd = app.add_subcommand("eval", "Evaluation protocols");
  ev_cmd->require_subcommand(1);
  std::string ev_input, ev_adapter, ev_out, ev_judge, ev_audit;
  int ev_budget = 3;
  std::size_t ev_concurrency = 4;
  auto add_common = [&](CLI::App* c, bool needs_adapter) {
    c->add_option("--input", ev_input)->required()->check(CLI::ExistingFile);
    c->add_option("--out", ev_out, "JSON report; a CSV is written next to it")->required();
    auto* a = c->add_option("--adapter", ev_adapter, "model (mcq) or judge (consistency) adapter spec");
    if (needs_adapter) a->required();
    c->add_option("--concurrency", ev_concurrency)->capture_default_str();
  };
  auto* ev_mcq = ev_cmd->add_subcommand("mcq", "Multiple-choice accuracy");
  add_common(ev_mcq, true);
  ev_mcq->add_option("--retry-budget", ev_budget)->capture_default_str();
  ev_mcq->add_option("--judge", ev_judge, "optional judge adapter for unmatched answers");
  auto* ev_iou = ev_cmd->add_subcommand("iou", "Box versus region IoU");
  add_common(ev_iou, false);
  auto* ev_seg = ev_cmd->add_subcommand("seg", "Dice and pixel IoU of mask pairs");
  add_common(ev_seg, false);
  auto* ev_cons = ev_cmd->add_subcommand("consistency", "Clinical consistency with a judge model");
  add_common(ev_cons, true);
  ev_cons->add_option("--audit", ev_audit, "judge transcripts (default: <out>.audit.jsonl)");
  auto* ev_scale = ev_cmd->add_subcommand("scaling", "Power-law fit of accuracy against data fraction");
  add_common(ev_scale, false);

  // serve
  auto* sv_cmd = app.add_subcommand("serve", "Review API, static UI and regeneration worker");
  std::string sv_config, sv_bind;
  int sv_port = -1;
  sv_cmd->add_option("--config", sv_config)->required()->check(CLI::ExistingFile);
  sv_cmd->add_option("--bind", sv_bind, "overrides serve.bind");
  sv_cmd->add_option("--port", sv_port, "overrides serve.port; 0 picks a free port");

  // pipeline
  auto* pl_cmd = app.add_subcommand("pipeline", "boxgen -> selftrain -> expand -> curate with checkpoints");
  std::string pl_config;
  bool pl_dry = false;
  pl_cmd->add_option("--config", pl_config)->required()->check(CLI::ExistingFile);
  pl_cmd->add_flag("--dry-run", pl_dry, "print the plan and write nothing");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*boxgen_cmd) {
      bg_params.threshold_mode = boxgen::parse_threshold_mode(bg_mode);
      const auto vocab = vocabulary_from(bg_vocab);
      const auto s = boxgen::run_boxgen(manifest_from(bg_manifest, vocab), bg_masks, bg_out, bg_params, bg_concurrency);
      json per_cat = json::object();
      for (const auto& [c, n] : s.boxes_per_category) per_cat[std::string(code(c))] = n;
      std::cout << json{{"images", s.images}, {"masks", s.masks}, {"boxes", per_cat}}.dump() << "\n";
    } else if (*st_cmd) {
      const auto vocab = vocabulary_from(st_vocab);
      const auto recs = manifest_from(st_manifest, vocab);
      const auto catalog = selftrain::make_catalog(recs);
      std::vector<SegMask> truth;
      std::vector<ImageRecord> unlabeled;
      selftrain::TestSet test;
      for (const auto& r : recs) {
        auto masks = discover_masks(st_masks, r);
        if (r.split == Split::HeldOut) {
          if (masks.empty()) continue;
          test.images.push_back(r);
          test.truth.insert(test.truth.end(), masks.begin(), masks.end());
        } else if (masks.empty()) {
          unlabeled.push_back(r);
        } else {
          truth.insert(truth.end(), masks.begin(), masks.end());
        }
      }
      auto seg = service::make_segmenter(st_segmenter, std::chrono::milliseconds(static_cast<long>(st_timeout_s * 1000)));
      selftrain::RoundOptions ro;
      ro.policy = st_policy;
      ro.workdir = fs::path(st_work) / "rounds";
      if (!test.images.empty()) ro.evaluation = &test;
      const auto states = selftrain::self_train(selftrain::initial_state(truth), unlabeled, catalog, *seg, st_rounds, ro);
      eval::write_json_file(fs::path(st_work) / "label_ledger.json", selftrain::label_ledger(states));
      json states_json = json::array();
      for (const auto& s : states) states_json.push_back(selftrain::to_json(s));
      eval::write_json_file(fs::path(st_work) / "rounds.json", states_json);
      if (!test.images.empty()) {
        const auto report = selftrain::evaluate_ood(states, test, catalog, *seg, fs::path(st_work) / "ood");
        write_report(fs::path(st_work) / "ood_report.json", report.to_json(), report.to_csv());
        std::cout << report.to_table();
      }
      std::cout << selftrain::label_ledger(states).dump() << "\n";
    } else if (*ex_cmd) {
      const auto vocab = vocabulary_from(ex_vocab);
      const auto bank = ex_templates.empty() ? expansion::TemplateBank::builtin() : expansion::TemplateBank::load(ex_templates);
      expansion::ReviewStore store(ex_store);
      auto annotations = read_annotations(ex_annotations);
      if (!ex_manifest.empty()) {
        std::map<std::string, ImageRecord> by_id;
        for (auto& r : manifest_from(ex_manifest, vocab)) by_id.emplace(r.id, r);
        std::vector<StructuredAnnotation> train;
        for (const auto& a : annotations) {
          auto it = by_id.find(a.image_id);
          if (it == by_id.end()) fail(Errc::NotFound, "annotation for unknown image " + a.image_id);
          store.put_image(a, it->second);
          if (it->second.split == Split::Train) train.push_back(a);
        }
        annotations = std::move(train);
      }
      auto adapter = service::make_chat_adapter(ex_adapter);
      expansion::ExpandOptions eo;
      eo.template_ids = ex_template_ids;
      eo.generation = ex_gen;
      eo.generation.base_seed = ex_seed;
      eo.concurrency = ex_concurrency;
      const auto summary = expansion::expand_corpus(annotations, bank, vocab, *adapter, store, eo);
      std::cout << summary.to_json().dump() << "\n";
    } else if (*cu_cmd) {
      const auto vocab = vocabulary_from(cu_vocab);
      const auto rules = cu_rules.empty() ? curator::RuleBank::builtin() : curator::RuleBank::load(cu_rules);
      const auto recipe = curator::load_recipe(cu_recipe);
      expansion::ReviewStore store(cu_store);
      const auto dataset = curator::build_dataset(recipe, store, vocab, rules);
      curator::write_jsonl(cu_out, dataset.samples);
      auto comp_path = fs::path(cu_out);
      comp_path.replace_extension(".composition.json");
      const auto comp = dataset.composition.to_json(recipe);
      eval::write_json_file(comp_path, comp);
      std::cout << comp.dump() << "\n";
    } else if (*ev_cmd) {
      if (*ev_mcq) {
        auto model = service::make_chat_adapter(ev_adapter);
        std::unique_ptr<expansion::ChatAdapter> judge;
        eval::McqOptions mo;
        mo.retry_budget = ev_budget;
        mo.concurrency = ev_concurrency;
        if (!ev_judge.empty()) {
          judge = service::make_chat_adapter(ev_judge);
          mo.match.judge = judge.get();
        }
        const auto report = eval::run_mcq(eval::load_mcq_items(ev_input), *model, mo);
        write_report(ev_out, report.to_json(), report.to_csv());
        std::cout << "accuracy " << report.overall.accuracy() << " (" << report.overall.correct << "/"
                  << report.overall.total << ")\n";
      } else if (*ev_iou || *ev_seg) {
        const auto report = *ev_iou ? eval::evaluate_box_iou(ev_input) : eval::evaluate_segmentation(ev_input);
        const auto doc = report.to_json();
        write_report(ev_out, doc, report.to_csv());
        std::cout << doc["overall"].dump() << "\n";
      } else if (*ev_cons) {
        auto judge = service::make_chat_adapter(ev_adapter);
        eval::ConsistencyOptions co;
        co.concurrency = ev_concurrency;
        co.audit_path = ev_audit.empty() ? fs::path(ev_out).replace_extension(".audit.jsonl") : fs::path(ev_audit);
        const auto report = eval::run_consistency(eval::load_consistency_cases(ev_input), *judge, co);
        write_report(ev_out, report.to_json(), report.to_csv());
        std::cout << "mean consistency " << report.mean_score() << "\n";
      } else if (*ev_scale) {
        const auto fit = eval::fit_scaling_law(eval::load_scaling_points(ev_input));
        write_report(ev_out, fit.to_json(), "");
        std::cout << fit.to_json().dump() << "\n";
      }
    } else if (*sv_cmd) {
      const auto config = service::Config::load(sv_config);
      const auto resources = service::Resources::load(config);
      fs::create_directories(config.paths.store.parent_path());
      expansion::ReviewStore store(config.paths.store);
      service::install_crash_hook_from_env(store);
      auto adapter = service::make_chat_adapter(config.expand.adapter);
      expansion::GenerateOptions go;
      go.retries = config.expand.retries;
      go.temperature = config.expand.temperature;
      go.base_seed = config.expand.seed;
      service::RegenWorker worker(store, resources.templates, resources.vocabulary, *adapter, go,
                                  config.serve.regen_interval);
      service::ReviewServer server(store, {config.qc.lease, config.paths.static_dir});
      const auto bind = sv_bind.empty() ? config.serve.bind : sv_bind;
      const int port = server.bind(bind, sv_port >= 0 ? sv_port : config.serve.port);
      auto waiter = signal_waiter([&] { server.stop(); });
      worker.start();
      std::cout << "listening on http://" << bind << ":" << port << std::endl;
      server.run();
      worker.stop();
      // The waiter only returns on a signal; stop() came from there.
      waiter.join();
    } else if (*pl_cmd) {
      const auto config = service::Config::load(pl_config);
      service::PipelineOptions po;
      po.dry_run = pl_dry;
      po.log = &std::cerr;
      const auto report = service::run_pipeline(config, po);
      std::cout << report.plan_text();
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
