#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fundus/core/json_io.hpp"
#include "fundus/expansion/chat_adapter.hpp"
#include "fundus/expansion/generator.hpp"

namespace fundus::eval {

struct McqOption {
  char letter = 'A';
  std::string text;
};

struct McqItem {
  std::string id;
  std::string category;
  std::string image;
  std::string question;
  std::vector<McqOption> options;
  char answer_letter = 'A';

  /// 2..26 options with distinct upper-case letters; the answer is one of
  /// them. Throws InvalidArgument.
  void validate() const;
};

json to_json(const McqItem& item);
/// Options may be {"A": "text", ...} or [{"letter": "A", "text": ...}] or a
/// plain list lettered from A.
McqItem mcq_item_from_json(const json& j);
std::vector<McqItem> load_mcq_items(const std::filesystem::path& path);

/// Which rung of the matching ladder decided.
enum class MatchRung { Unmatched, Letter, LetterPrefix, OptionText, Judge };

std::string to_string(MatchRung rung);

struct MatchResult {
  std::optional<char> letter;
  MatchRung rung = MatchRung::Unmatched;
};

struct MatchOptions {
  /// Asked only when the deterministic rungs fail; off by default.
  expansion::ChatAdapter* judge = nullptr;
};

/// Ladder, first decisive rung wins:
///  1. the reply is a lone option letter ("B", "(B)", "B.") or states
///     "answer is B" / "answer: B";
///  2. the reply starts with "B. text" / "B) text" / "B: text";
///  3. exactly one option text occurs in the reply on word boundaries,
///     ignoring case; an occurrence inside a longer matched option text does
///     not count;
///  4. the optional judge names a letter.
/// Two candidates on a rung give Unmatched.
MatchResult match_answer(const std::string& response, const std::vector<McqOption>& options,
                         const MatchOptions& options_match = {});

struct McqOptions {
  /// Re-asks after an empty or refused reply.
  int retry_budget = 3;
  std::vector<std::string> refusal_phrases = expansion::GenerateOptions::default_refusal_phrases();
  std::size_t concurrency = 4;
  MatchOptions match;
};

struct McqItemResult {
  std::string id;
  std::string category;
  std::string response;
  std::optional<char> predicted;
  MatchRung rung = MatchRung::Unmatched;
  bool correct = false;
  int retries = 0;
  bool budget_exhausted = false;
};

struct CategoryScore {
  std::size_t correct = 0;
  std::size_t total = 0;
  [[nodiscard]] double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

struct McqReport {
  std::vector<McqItemResult> items;
  std::map<std::string, CategoryScore> per_category;
  CategoryScore overall;
  std::size_t budget_exhausted = 0;

  [[nodiscard]] json to_json() const;
  [[nodiscard]] std::string to_csv() const;
};

/// Builds the chat request for an item (temperature 0, fixed seed 0).
expansion::ChatRequest mcq_request(const McqItem& item);

/// Scores every item. Empty or refused replies are retried up to the budget;
/// an item that never gets an answer is flagged and scored incorrect.
/// Errors: AdapterFailure.
McqReport run_mcq(const std::vector<McqItem>& items, expansion::ChatAdapter& adapter, const McqOptions& options);

}  // namespace fundus::eval
