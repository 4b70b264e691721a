#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fundus/core/json_io.hpp"
#include "fundus/core/types.hpp"

namespace fundus::curator {

enum class TaskType { GeneralReport, RegionalQa, GroundingReport, MultiturnDiagnostic, MultiturnConfirmation };

inline constexpr TaskType kAllTaskTypes[] = {TaskType::GeneralReport, TaskType::RegionalQa, TaskType::GroundingReport,
                                             TaskType::MultiturnDiagnostic, TaskType::MultiturnConfirmation};

std::string to_string(TaskType type);
TaskType parse_task_type(std::string_view text);
bool is_multiturn(TaskType type);

enum class Role { User, Assistant };

struct Turn {
  Role role = Role::User;
  std::string text;
};

/// Where one (user, assistant) pair came from.
struct PairProvenance {
  /// Rule-bank id of the user prompt.
  std::string prompt_rule;
  /// "accepted_text", "rule" or "composed" (accepted text plus a rule-built
  /// conclusion).
  std::string source;
  /// Accepted GeneratedText ids the answer is drawn from.
  std::vector<std::int64_t> text_ids;
  /// Rule-bank id of a rule-built answer or conclusion, if any.
  std::string answer_rule;
  /// Region codes and canonical disease names the answer rests on.
  std::vector<std::string> features;
  /// Boxes cited in the answer.
  std::vector<BoxRect> boxes;
  /// Earlier pair whose features or boxes this answer builds on.
  std::optional<std::size_t> builds_on;
};

struct InstructionSample {
  std::string id;
  std::string image_id;
  std::string image;  // path written to the dataset
  TaskType task_type = TaskType::GeneralReport;
  std::vector<Turn> turns;
  /// One entry per (user, assistant) pair.
  std::vector<PairProvenance> provenance;
  /// Set on single-turn pieces of a degraded chain: id of the original.
  std::optional<std::string> split_from;

  [[nodiscard]] std::size_t pair_count() const noexcept { return turns.size() / 2; }

  /// Alternation starting with the user, provenance per pair, and the pair
  /// count of the task type (multiturn types need >= 2 unless split).
  /// Throws InvalidArgument.
  void check() const;
};

/// {"id", "image", "image_id", "task_type", "messages", "provenance"
/// [, "split_from"]}; the first user message starts with "<image>\n".
json to_json(const InstructionSample& sample);
InstructionSample instruction_sample_from_json(const json& j);

/// Every pair after the first must name an earlier pair it builds on and
/// share at least one feature or box with it, per the provenance records.
bool chain_intact(const InstructionSample& sample);

/// True when any turn contains a box token.
bool contains_box_token(const InstructionSample& sample);

}  // namespace fundus::curator
