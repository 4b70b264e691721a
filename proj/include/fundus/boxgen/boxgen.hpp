#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fundus/boxgen/dbscan.hpp"
#include "fundus/core/manifest.hpp"
#include "fundus/core/types.hpp"

namespace fundus::boxgen {

/// What the retention threshold is compared against.
enum class ThresholdMode {
  BoxArea,      // (x_max - x_min) * (y_max - y_min)
  ClusterSize,  // number of clustered pixels
};

struct ClusterParams {
  double epsilon = 160.0;
  int min_samples = 10;
  /// Strict: a box survives when its measure is > area_threshold.
  std::int64_t area_threshold = 100;
  int max_boxes = 3;
  ThresholdMode threshold_mode = ThresholdMode::BoxArea;
  /// Block size for optional pre-clustering downsampling; 1 disables it.
  int downsample = 1;

  /// Throws InvalidArgument on epsilon <= 0, min_samples < 1, max_boxes < 1,
  /// area_threshold < 0 or downsample < 1.
  void validate() const;
};

std::string to_string(ThresholdMode mode);
ThresholdMode parse_threshold_mode(const std::string& text);

std::vector<PixelCluster> cluster_foreground(const MaskRaster& mask, const ClusterParams& params);

/// Tight box per cluster, filtered by the retention threshold, sorted by area
/// (descending, ties by x_min then y_min), truncated to max_boxes.
std::vector<BoundingBox> boxes_from_clusters(const std::vector<PixelCluster>& clusters,
                                             Category category, ImageSize size,
                                             const ClusterParams& params);

/// Validates each mask against the record and merges its boxes with the
/// record's global labels. Output is independent of mask order.
StructuredAnnotation annotate_image(const ImageRecord& record, const std::vector<SegMask>& masks,
                                    const ClusterParams& params);

struct BoxgenSummary {
  std::size_t images = 0;
  std::size_t masks = 0;
  std::map<Category, std::size_t> boxes_per_category;
};

/// Annotates every record of a manifest with the masks found under
/// masks/<image_id>/<CODE>.png and writes annotations/<image_id>.json.
BoxgenSummary run_boxgen(const std::vector<ImageRecord>& records,
                         const std::filesystem::path& masks_dir,
                         const std::filesystem::path& out_dir, const ClusterParams& params,
                         std::size_t concurrency = 1);

}  // namespace fundus::boxgen
