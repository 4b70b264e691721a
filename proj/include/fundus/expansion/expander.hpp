#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fundus/core/error.hpp"
#include "fundus/expansion/generator.hpp"
#include "fundus/expansion/review_store.hpp"

namespace fundus::expansion {

struct ExpandOptions {
  /// Empty means every template in the bank.
  std::vector<std::string> template_ids;
  GenerateOptions generation;
  std::size_t concurrency = 4;
  /// Leave (image, template) pairs that already have a text alone.
  bool skip_existing = true;
};

struct ExpandFailure {
  std::string image_id;
  std::string template_id;
  Errc code = Errc::AdapterFailure;
  std::string message;
};

struct ExpandSummary {
  std::size_t generated = 0;
  std::size_t skipped_existing = 0;
  /// Template needs data the annotation lacks (e.g. boxes); not an error.
  std::size_t not_applicable = 0;
  std::vector<ExpandFailure> failures;

  [[nodiscard]] json to_json() const;
};

/// Generates one pending text per (annotation, template) into the store,
/// registering images the store does not know yet. Generation failures are
/// collected rather than thrown.
ExpandSummary expand_corpus(const std::vector<StructuredAnnotation>& annotations, const TemplateBank& templates,
                            const DiseaseVocabulary& vocabulary, ChatAdapter& adapter, ReviewStore& store,
                            const ExpandOptions& options);

/// Serves every open regeneration request with a fresh attempt and seed.
/// Returns the number of replacements stored; requests that cannot be served
/// are closed with a regeneration_failed event.
std::size_t process_regenerations(ReviewStore& store, const TemplateBank& templates,
                                  const DiseaseVocabulary& vocabulary, ChatAdapter& adapter,
                                  const GenerateOptions& base);

}  // namespace fundus::expansion
