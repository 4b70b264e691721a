#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fundus/core/json_io.hpp"
#include "fundus/expansion/chat_adapter.hpp"

namespace fundus::eval {

struct ConsistencyCase {
  std::string image_id;
  /// Positive and negative findings; must be nonempty.
  std::vector<std::string> labels;
  std::string report;
};

ConsistencyCase consistency_case_from_json(const json& j);
std::vector<ConsistencyCase> load_consistency_cases(const std::filesystem::path& path);

/// What the judge must return, parsed and bounds-checked.
struct JudgeVerdict {
  std::vector<std::string> generated_features;
  std::map<std::string, bool> matches;
  std::size_t union_size = 0;
};

/// Parses the strict JSON contract:
///   {"generated_features": [str...], "matches": {label: bool...},
///    "union_size": int}
/// One optional ```json fence is tolerated. Every label must be judged, and
/// max(|L|, |S|) <= union_size <= |L| + |S|. Throws MalformedJudgeOutput.
JudgeVerdict parse_judge_verdict(const std::string& reply, const std::vector<std::string>& labels);

/// Σ match(l) / |L ∪ S|.
double consistency_score(const JudgeVerdict& verdict);

struct JudgeExchange {
  json request;
  std::string reply;
  std::optional<std::string> error;
};

struct ConsistencyResult {
  std::string image_id;
  double score = 0.0;
  JudgeVerdict verdict;
  std::string judge_tag;
  std::vector<JudgeExchange> transcript;

  [[nodiscard]] json to_json() const;
};

expansion::ChatRequest judge_request(const ConsistencyCase& c);

/// Scores one case. An empty report scores 0 without asking the judge. A
/// reply that breaks the contract is retried once. Errors: InvalidArgument,
/// JudgeFailure (adapter error), MalformedJudgeOutput.
ConsistencyResult clinical_consistency(const ConsistencyCase& c, expansion::ChatAdapter& judge);

struct ConsistencyReport {
  std::vector<ConsistencyResult> results;

  [[nodiscard]] double mean_score() const;
  [[nodiscard]] json to_json() const;
  [[nodiscard]] std::string to_csv() const;
};

struct ConsistencyOptions {
  std::size_t concurrency = 4;
  /// Full judge transcripts, one JSON line per case.
  std::optional<std::filesystem::path> audit_path;
};

ConsistencyReport run_consistency(const std::vector<ConsistencyCase>& cases, expansion::ChatAdapter& judge,
                                  const ConsistencyOptions& options);

}  // namespace fundus::eval
