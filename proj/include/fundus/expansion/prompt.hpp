#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "fundus/core/types.hpp"
#include "fundus/core/vocabulary.hpp"
#include "fundus/expansion/chat_adapter.hpp"

namespace fundus::expansion {

/// What a generated text is for; the curator assembles samples by purpose.
enum class TextPurpose { GeneralReport, GroundingReport, RegionAnalysis, Diagnosis, Overview, FeatureVerification };

inline constexpr TextPurpose kAllPurposes[] = {TextPurpose::GeneralReport,  TextPurpose::GroundingReport,
                                               TextPurpose::RegionAnalysis, TextPurpose::Diagnosis,
                                               TextPurpose::Overview,       TextPurpose::FeatureVerification};

std::string to_string(TextPurpose purpose);
TextPurpose parse_purpose(std::string_view text);

inline const std::string kObservationalObjectivity = "observational_objectivity";
inline const std::string kClinicalRelevance = "clinical_relevance";

/// User templates may use these placeholders:
///   {labels}  disease labels, verbalized with their grades ("none" when empty)
///   {grades}  "disease: grade" pairs ("none" when empty)
///   {boxes}   one "CODE: [x_min, y_min, x_max, y_max]" line per box; required
///   {boxes?}  same, but renders "none" for an annotation without boxes
///   {notes}   free-text lesion notes ("none" when empty)
///   {size}    "<width> x <height>"
///   {target}  disease under verification; required
struct PromptTemplate {
  std::string id;
  TextPurpose purpose = TextPurpose::GeneralReport;
  std::string system_text;
  std::string user_template;
  std::set<std::string> constraint_tags;
  std::string output_contract;

  /// Throws InvalidArgument: unknown placeholder, unbalanced brace, unknown
  /// constraint tag, or a required constraint missing.
  void validate() const;
};

json to_json(const PromptTemplate& t);
PromptTemplate prompt_template_from_json(const json& j);

class TemplateBank {
 public:
  TemplateBank() = default;
  explicit TemplateBank(std::vector<PromptTemplate> templates);

  /// One template per purpose, id equal to the purpose name.
  static const TemplateBank& builtin();
  /// {"templates": [...]}
  static TemplateBank load(const std::filesystem::path& path);

  /// Throws NotFound.
  [[nodiscard]] const PromptTemplate& find(std::string_view id) const;
  [[nodiscard]] const std::vector<PromptTemplate>& all() const noexcept { return templates_; }

 private:
  std::vector<PromptTemplate> templates_;
};

/// Sentence instructing the model for a constraint tag.
std::string constraint_text(std::string_view tag);

struct RenderOptions {
  /// Overrides the default {target}: the first disease label, verbalized.
  std::optional<std::string> target;
};

/// "OD: [100, 100, 300, 300]" lines, in category then box order.
std::string render_box_lines(const StructuredAnnotation& annotation);

/// Builds the system and user messages. The image id never appears in them,
/// so annotations that differ only by id give identical prompts.
/// Throws MissingField when a required placeholder has no source datum.
ChatRequest render_prompt(const StructuredAnnotation& annotation, const PromptTemplate& tmpl,
                          const DiseaseVocabulary& vocabulary, const RenderOptions& options = {});

}  // namespace fundus::expansion
