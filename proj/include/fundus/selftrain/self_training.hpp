#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fundus/core/json_io.hpp"
#include "fundus/core/types.hpp"
#include "fundus/selftrain/segmenter.hpp"

namespace fundus::selftrain {

using ImageCatalog = std::map<std::string, ImageRecord>;

ImageCatalog make_catalog(const std::vector<ImageRecord>& records);

struct SegMetrics {
  double dice = 0.0;
  double iou_pixel = 0.0;
  std::size_t cases = 0;
};

/// Training pool after `round` self-training rounds. Round 0 holds only true
/// labels; masks added in round r are pseudo_label(r).
struct RoundState {
  int round = 0;
  std::vector<SegMask> labeled;
  std::map<Category, SegMetrics> metrics_per_category;

  /// Throws InvalidArgument when an invariant is broken.
  void check() const;
};

RoundState initial_state(std::vector<SegMask> true_labels);

/// Predicted masks with fewer foreground pixels than min_foreground are
/// rejected; max_per_image (0 = unlimited) keeps the largest predictions.
struct AcceptPolicy {
  std::int64_t min_foreground = 1;
  std::size_t max_per_image = 0;
};

/// Held-out images with true masks, scored after each round.
struct TestSet {
  std::vector<ImageRecord> images;
  std::vector<SegMask> truth;
};

struct RoundOptions {
  AcceptPolicy policy;
  /// Round r writes under workdir/round_<r>.
  std::filesystem::path workdir;
  std::size_t predict_batch = 16;
  std::size_t max_in_flight = 2;
  /// When set, per-category metrics are computed on it after training.
  const TestSet* evaluation = nullptr;
};

/// One self-training round: train on state.labeled, predict the unlabeled
/// images in bounded concurrent batches, accept predictions by policy and
/// append them as pseudo_label(round + 1). Predictions for (image, category)
/// pairs that already carry a true label are ignored. Earlier masks are
/// carried over untouched (cumulative pool).
/// Errors: EmptyTrainingSet, AdapterFailure.
RoundState run_round(const RoundState& state, const std::vector<ImageRecord>& unlabeled,
                     const ImageCatalog& catalog, SegmenterAdapter& adapter,
                     const RoundOptions& options);

/// Runs `rounds` rounds from `initial`; element i of the result is the state
/// after i rounds.
std::vector<RoundState> self_train(const RoundState& initial, const std::vector<ImageRecord>& unlabeled,
                                   const ImageCatalog& catalog, SegmenterAdapter& adapter, int rounds,
                                   const RoundOptions& options);

/// Per-category scores of `adapter`'s predictions on the test set; a missing
/// prediction counts as an empty mask.
std::map<Category, SegMetrics> score_predictions(const std::vector<PredictedMask>& predictions,
                                                 const TestSet& test);

struct LabelCounts {
  std::size_t true_labels = 0;
  std::size_t pseudo_labels = 0;
};

std::map<Category, LabelCounts> label_counts(const RoundState& state);

/// [{"round": r, "counts": {"OC": {"true": n, "pseudo": m}, ...}}, ...]
json label_ledger(const std::vector<RoundState>& states);

json to_json(const RoundState& state);
RoundState round_state_from_json(const json& j);

}  // namespace fundus::selftrain
