#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "fundus/core/json_io.hpp"
#include "fundus/core/vocabulary.hpp"
#include "fundus/curator/rule_bank.hpp"
#include "fundus/expansion/prompt.hpp"
#include "fundus/service/config.hpp"

namespace fundus::service {

/// Vocabulary, templates and rules named by the config, or the built-ins.
struct Resources {
  DiseaseVocabulary vocabulary;
  expansion::TemplateBank templates;
  curator::RuleBank rules;

  static Resources load(const Config& config);
};

struct StageReport {
  std::string name;
  /// "run", "skip" or, for dry runs, "would_run".
  std::string action;
  std::string reason;
  std::string input_hash;
  std::string output_hash;
  double seconds = 0.0;
  json details = json::object();
};

struct PipelineReport {
  bool dry_run = false;
  std::vector<StageReport> stages;

  [[nodiscard]] json to_json() const;
  /// One line per stage.
  [[nodiscard]] std::string plan_text() const;
};

struct PipelineOptions {
  bool dry_run = false;
  /// Progress lines; nullptr for silence.
  std::ostream* log = nullptr;
};

/// Artifacts under <work>:
///   annotations/             boxgen output
///   selftrain/               rounds, label ledger, OOD report, annotations
///   <store>                  review store (expand)
///   <curate.output>, composition.json
///   pipeline_state.json      per-stage input and output hashes
///   run_summary.json
/// A stage is skipped when its input hash and the hash of its current
/// outputs both match the recorded ones, so a damaged output reruns the
/// stage. A failure is rethrown with the stage name prefixed. A dry run
/// writes nothing.
PipelineReport run_pipeline(const Config& config, const PipelineOptions& options = {});

/// SHA-256 of every regular file under `dir` (relative path and contents,
/// sorted by path); the empty string when the directory is absent.
std::string hash_tree(const std::filesystem::path& dir);

}  // namespace fundus::service
