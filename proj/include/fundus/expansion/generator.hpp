#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fundus/core/json_io.hpp"
#include "fundus/core/types.hpp"
#include "fundus/core/vocabulary.hpp"
#include "fundus/expansion/chat_adapter.hpp"
#include "fundus/expansion/prompt.hpp"

namespace fundus::expansion {

enum class TextStatus { PendingReview, Accepted, Discarded, RegenerateRequested };

std::string to_string(TextStatus status);
TextStatus parse_text_status(std::string_view text);

struct GeneratedText {
  std::int64_t id = 0;  // assigned by the review store
  std::string image_id;
  std::string template_id;
  TextPurpose purpose = TextPurpose::GeneralReport;
  std::string text;
  /// Boxes cited inline, in order of first citation.
  std::vector<BoundingBox> box_refs;
  std::string generator_tag;
  TextStatus status = TextStatus::PendingReview;
  /// 1 for the first generation, +1 per regeneration.
  int attempt = 1;
  std::uint64_t seed = 0;
  /// Rejected completions before this one.
  int retry_count = 0;
  std::optional<std::int64_t> parent_id;
  /// Value of {target} the prompt was rendered with, if any.
  std::optional<std::string> target;
};

json to_json(const GeneratedText& text);
GeneratedText generated_text_from_json(const json& j, ImageSize size);

struct GenerateOptions {
  /// Extra completions allowed after the first.
  int retries = 3;
  double temperature = 0.7;
  std::uint64_t base_seed = 0;
  int attempt = 1;
  RenderOptions render;
  /// Completions already produced for this image and template; rejected as
  /// duplicates when the adapter can sample.
  std::vector<std::string> previous_texts;
  std::vector<std::string> refusal_phrases = default_refusal_phrases();

  static std::vector<std::string> default_refusal_phrases();
};

/// Seed of the k-th completion (k = 0 for the first try) of a given attempt.
/// Distinct attempts and retries never share a seed.
std::uint64_t completion_seed(std::uint64_t base_seed, const std::string& image_id, const std::string& template_id,
                              int attempt, int k, int retries);

/// Every box token must be well formed and equal one of the annotation's
/// boxes. Returns the cited boxes or throws MalformedOutput.
std::vector<BoundingBox> resolve_box_refs(const std::string& text, const StructuredAnnotation& annotation);

bool looks_like_refusal(const std::string& text, const std::vector<std::string>& phrases);

/// Renders the template, queries the adapter and validates the completion.
/// Empty, refused, duplicate or malformed completions are retried with a new
/// seed. Errors: MissingField, AdapterFailure, RefusalDetected,
/// MalformedOutput.
GeneratedText generate(const StructuredAnnotation& annotation, const PromptTemplate& tmpl,
                       const DiseaseVocabulary& vocabulary, ChatAdapter& adapter, const GenerateOptions& options);

}  // namespace fundus::expansion
