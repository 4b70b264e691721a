#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fundus {

/// Disease vocabulary used to harmonize labels from heterogeneous sources and
/// to verbalize ordinal grades.
///
/// JSON form:
///   {"diseases": [{"name": "diabetic retinopathy",
///                  "synonyms": ["DR", "diabetic retinopathy (DR)"],
///                  "grades": {"0": "no diabetic retinopathy", ...}}]}
class DiseaseVocabulary {
 public:
  struct Entry {
    std::string name;
    std::vector<std::string> synonyms;
    std::map<int, std::string> grades;
  };

  DiseaseVocabulary() = default;
  explicit DiseaseVocabulary(std::vector<Entry> entries);

  /// Common fundus diseases with diabetic-retinopathy grading.
  static DiseaseVocabulary builtin();
  static DiseaseVocabulary load(const std::filesystem::path& path);

  /// Canonical name for a label or synonym (case-insensitive); unknown labels
  /// are returned trimmed but otherwise unchanged.
  [[nodiscard]] std::string canonicalize(std::string_view label) const;

  /// "moderate nonproliferative diabetic retinopathy" for (DR, 2); falls back
  /// to "<disease> (grade N)". The result always contains the disease name.
  [[nodiscard]] std::string verbalize(const std::string& disease, std::optional<int> grade) const;

  /// Earliest disease mentioned in free text, by canonical name.
  /// Every disease mentioned in free text, by canonical name, ordered by
  /// first position.
  [[nodiscard]] std::vector<std::string> mentions(std::string_view text) const;

  [[nodiscard]] std::optional<std::string> first_mention(std::string_view text) const;

  [[nodiscard]] const std::vector<Entry>& entries() const noexcept { return entries_; }

 private:
  const Entry* find(std::string_view label) const;

  std::vector<Entry> entries_;
};

std::string to_lower(std::string_view text);
std::string trim(std::string_view text);

}  // namespace fundus
