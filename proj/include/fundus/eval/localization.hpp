#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fundus/core/json_io.hpp"
#include "fundus/core/raster.hpp"
#include "fundus/core/types.hpp"
#include "fundus/selftrain/metrics.hpp"

namespace fundus::eval {

/// Pixel counts of a filled predicted box against a truth region. The box
/// must lie inside the mask (InvalidArgument otherwise).
selftrain::OverlapCounts box_region_counts(const BoundingBox& box, const MaskRaster& truth);

/// TP / (TP + FP + FN) with the box rasterized as a filled rectangle.
double iou_box_vs_region(const BoundingBox& box, const MaskRaster& truth);

/// Reads the truth mask; DimensionMismatch when it does not match the image.
double iou_box_vs_region(const BoundingBox& box, const SegMask& truth, ImageSize image_size);

struct RegionScore {
  std::string id;
  std::string category;
  double value = 0.0;
  /// Second metric for segmentation pairs (IoU); unused for boxes.
  double secondary = 0.0;
};

struct RegionReport {
  /// "box_iou" or "segmentation".
  std::string kind;
  std::vector<RegionScore> cases;

  /// Per-category and overall means.
  [[nodiscard]] json to_json() const;
  [[nodiscard]] std::string to_csv() const;
};

/// JSONL rows {"id", "category", "box": [x0,y0,x1,y1], "mask": path,
/// "width", "height"}; mask paths are relative to the input file.
RegionReport evaluate_box_iou(const std::filesystem::path& input);

/// JSONL rows {"id", "category", "prediction": path, "truth": path}; scores
/// Dice and pixel IoU per pair.
RegionReport evaluate_segmentation(const std::filesystem::path& input);

}  // namespace fundus::eval
