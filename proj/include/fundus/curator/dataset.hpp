#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fundus/core/json_io.hpp"
#include "fundus/core/vocabulary.hpp"
#include "fundus/curator/builders.hpp"
#include "fundus/curator/instruction.hpp"
#include "fundus/curator/rule_bank.hpp"
#include "fundus/expansion/box_tokens.hpp"
#include "fundus/expansion/review_store.hpp"

namespace fundus::curator {

enum class Ablation { None, CognitiveDegradation, RegionRemoval, StartupRemoval };

std::string to_string(Ablation ablation);
Ablation parse_ablation(std::string_view text);

/// Recipe JSON:
///   {"seed": 7, "ablation": "none",
///    "counts": {"general_report": 10, ...}}              exact per-type counts
///   or {"total": 100, "fractions": {"regional_qa": 0.5, ...}}
///   or {"total": 100}                                    uniform over the pool
///   optional "box_style": "absolute" | "normalized"
struct DatasetRecipe {
  std::map<TaskType, std::size_t> counts;
  std::optional<std::size_t> total;
  std::map<TaskType, double> fractions;
  std::uint64_t seed = 0;
  Ablation ablation = Ablation::None;
  expansion::BoxStyle box_style = expansion::BoxStyle::Absolute;

  /// Throws InvalidArgument for a recipe that mixes or lacks sizing modes,
  /// or has negative fractions.
  void validate() const;
};

json to_json(const DatasetRecipe& recipe);
DatasetRecipe dataset_recipe_from_json(const json& j);
DatasetRecipe load_recipe(const std::filesystem::path& path);

/// Per-type counts from fractions by largest remainder; ties go to the
/// earlier task type.
std::map<TaskType, std::size_t> apportion(std::size_t total, const std::map<TaskType, double>& fractions);

/// Every candidate sample of the train-split images. Builders that lack
/// their inputs are skipped; multiturn samples whose provenance does not
/// link the turns are dropped.
struct SamplePool {
  std::vector<InstructionSample> samples;
  /// "<task_type>: <reason>" -> count
  std::map<std::string, std::size_t> skipped;
  std::size_t held_out_images = 0;
};

SamplePool build_pool(const std::vector<expansion::StoredImage>& images, const std::vector<expansion::GeneratedText>& accepted,
                      const DiseaseVocabulary& vocabulary, const RuleBank& rules, std::uint64_t seed);

/// Applies the ablation transform to a pool.
std::vector<InstructionSample> apply_ablation(std::vector<InstructionSample> samples, Ablation ablation);

struct Composition {
  std::map<TaskType, std::size_t> available;  // after ablation
  std::map<TaskType, std::size_t> selected;
  std::size_t total = 0;
  std::size_t box_token_samples = 0;
  std::size_t split_pieces = 0;
  std::map<std::string, std::size_t> skipped;
  std::size_t held_out_images = 0;

  [[nodiscard]] json to_json(const DatasetRecipe& recipe) const;
};

struct Dataset {
  std::vector<InstructionSample> samples;
  Composition composition;
};

/// Samples the recipe from a pool (after ablation). Errors:
/// InsufficientSamples naming the task type.
Dataset sample_dataset(const std::vector<InstructionSample>& pool, const DatasetRecipe& recipe);

/// Snapshot of the store's images and accepted texts, pooled, ablated and
/// sampled.
Dataset build_dataset(const DatasetRecipe& recipe, const expansion::ReviewStore& store,
                      const DiseaseVocabulary& vocabulary, const RuleBank& rules = RuleBank::builtin());

/// One JSON object per line, keys sorted; the file is byte-identical for
/// identical inputs.
void write_jsonl(const std::filesystem::path& path, const std::vector<InstructionSample>& samples);
std::vector<InstructionSample> read_jsonl(const std::filesystem::path& path);

}  // namespace fundus::curator
