#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "fundus/core/rng.hpp"

namespace fundus::curator {

struct Rule {
  std::string id;
  std::string text;
};

/// Paraphrase bank for rule-built turns, grouped into named slots. A seeded
/// draw picks one paraphrase per use.
///
/// Slots and their placeholders:
///   general_report.prompt
///   regional_qa.prompt            {category}
///   regional_qa.answer_one        {category} {boxes}
///   regional_qa.answer_many       {category} {boxes} {count}
///   grounding_report.prompt
///   diagnostic.turn1
///   diagnostic.turn2
///   diagnostic.conclusion         {features} {diagnosis}
///   diagnostic.normal             {features}
///   confirmation.turn1
///   confirmation.turn2            {target}
class RuleBank {
 public:
  RuleBank() = default;
  explicit RuleBank(std::map<std::string, std::vector<std::string>> slots);

  static const RuleBank& builtin();
  /// {"slots": {"<slot>": ["text", ...]}}; slots not listed keep the
  /// builtin paraphrases.
  static RuleBank load(const std::filesystem::path& path);

  /// Throws NotFound.
  [[nodiscard]] const std::vector<Rule>& slot(std::string_view name) const;
  const Rule& pick(std::string_view name, SeededRng& rng) const;

 private:
  std::map<std::string, std::vector<Rule>, std::less<>> slots_;
};

/// Replaces {name} with values[name]; unknown placeholders throw
/// InvalidArgument.
std::string fill(std::string_view text, const std::map<std::string, std::string>& values);

}  // namespace fundus::curator
