#pragma once

#include <map>
#include <string>
#include <vector>

#include "fundus/core/rng.hpp"
#include "fundus/core/types.hpp"
#include "fundus/core/vocabulary.hpp"
#include "fundus/curator/instruction.hpp"
#include "fundus/curator/rule_bank.hpp"
#include "fundus/expansion/generator.hpp"

namespace fundus::curator {

/// Accepted texts of one image, grouped by purpose and ordered by id.
struct AcceptedTexts {
  std::map<expansion::TextPurpose, std::vector<expansion::GeneratedText>> by_purpose;

  /// Groups by image id; non-accepted texts are ignored.
  static std::map<std::string, AcceptedTexts> group(const std::vector<expansion::GeneratedText>& texts);

  /// Oldest accepted text of a purpose, or nullptr.
  [[nodiscard]] const expansion::GeneratedText* first(expansion::TextPurpose purpose) const;
};

/// Shared inputs of the builders.
struct BuildContext {
  const DiseaseVocabulary& vocabulary;
  const RuleBank& rules;
  /// Image path written to samples; falls back to the image id.
  std::string image;
};

/// Single turn: a rule prompt answered with the accepted general report.
/// Errors: MissingAcceptedText.
InstructionSample make_general_report(const StructuredAnnotation& annotation, const AcceptedTexts& texts,
                                      const BuildContext& ctx, SeededRng& rng);

/// Rule-generated localization question about one sampled category and an
/// answer listing that category's boxes. Errors: NoBoxes.
InstructionSample make_regional_qa(const StructuredAnnotation& annotation, const BuildContext& ctx, SeededRng& rng);

/// Single turn answered with the accepted grounding report.
/// Errors: MissingAcceptedText.
InstructionSample make_grounding_report(const StructuredAnnotation& annotation, const AcceptedTexts& texts,
                                        const BuildContext& ctx, SeededRng& rng);

/// Two pairs: region analysis, then a diagnostic suggestion that restates
/// the turn-1 regions and concludes with the annotated diagnosis (or a normal
/// finding when there is none). Errors: MissingAcceptedText.
InstructionSample make_cognitive_chain_diagnostic(const StructuredAnnotation& annotation, const AcceptedTexts& texts,
                                                  const BuildContext& ctx, SeededRng& rng);

/// Two pairs: a preliminary overview, then verification of one disease. The
/// target is the first annotated disease the overview mentions, else the
/// first disease the overview mentions, else the first annotated disease.
/// Errors: MissingAcceptedText (also when no target can be named).
InstructionSample make_cognitive_chain_confirmation(const StructuredAnnotation& annotation,
                                                    const AcceptedTexts& texts, const BuildContext& ctx,
                                                    SeededRng& rng);

/// Each pair becomes its own single-turn sample on the same image, marked
/// with split_from. Errors: NotMultiturn.
std::vector<InstructionSample> degrade_cognitive_chain(const InstructionSample& sample);

}  // namespace fundus::curator
