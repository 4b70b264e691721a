#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fundus/selftrain/self_training.hpp"

namespace fundus::selftrain {

/// Dice / pixel IoU per category and label regime, laid out like the
/// true-label vs pseudo-label comparison table: one row per category (all
/// five, always), two metric columns per regime.
struct OodReport {
  std::vector<std::string> regimes;
  std::map<Category, std::vector<std::optional<SegMetrics>>> cells;

  [[nodiscard]] json to_json() const;
  [[nodiscard]] std::string to_csv() const;
  /// Fixed-width text table with percentages.
  [[nodiscard]] std::string to_table() const;
};

/// "True Labels" for round 0, then "Pseudo Labels (round 1)",
/// "Iterative Pseudo Labels (round N)".
std::string regime_name(int round);

/// Retrains the adapter on each state's pool and scores predictions on the
/// out-of-domain test set. Categories without test truth are reported empty.
OodReport evaluate_ood(const std::vector<RoundState>& states, const TestSet& test,
                       const ImageCatalog& catalog, SegmenterAdapter& adapter,
                       const std::filesystem::path& workdir);

}  // namespace fundus::selftrain
