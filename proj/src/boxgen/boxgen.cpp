#include "fundus/boxgen/boxgen.hpp"

#include <algorithm>
#include <limits>
#include <mutex>

#include "fundus/core/annotation_io.hpp"
#include "fundus/core/error.hpp"
#include "fundus/core/parallel.hpp"

namespace fundus::boxgen {

void ClusterParams::validate() const {
  if (!(epsilon > 0)) fail(Errc::InvalidArgument, "epsilon must be > 0");
  if (min_samples < 1) fail(Errc::InvalidArgument, "min_samples must be >= 1");
  if (max_boxes < 1) fail(Errc::InvalidArgument, "max_boxes must be >= 1");
  if (area_threshold < 0) fail(Errc::InvalidArgument, "area_threshold must be >= 0");
  if (downsample < 1) fail(Errc::InvalidArgument, "downsample must be >= 1");
}

std::string to_string(ThresholdMode mode) {
  return mode == ThresholdMode::ClusterSize ? "cluster" : "box";
}

ThresholdMode parse_threshold_mode(const std::string& text) {
  if (text == "box") return ThresholdMode::BoxArea;
  if (text == "cluster") return ThresholdMode::ClusterSize;
  fail(Errc::InvalidArgument, "threshold mode must be 'box' or 'cluster', got '" + text + "'");
}

std::vector<PixelCluster> cluster_foreground(const MaskRaster& mask, const ClusterParams& params) {
  params.validate();
  if (params.downsample == 1) return dbscan_pixels(mask, params.epsilon, params.min_samples);

  // A block is foreground when any of its pixels is; original pixels inherit
  // their block's cluster.
  const int f = params.downsample;
  const int w = (mask.width() + f - 1) / f;
  const int h = (mask.height() + f - 1) / f;
  MaskRaster coarse(w, h);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (mask.foreground(x, y)) coarse.set(x / f, y / f, 255);
    }
  }
  const auto coarse_clusters = dbscan_pixels(coarse, params.epsilon / f, params.min_samples);
  std::vector<int> block_label(static_cast<std::size_t>(w) * h, -1);
  for (std::size_t c = 0; c < coarse_clusters.size(); ++c) {
    for (const Pixel& p : coarse_clusters[c].pixels) {
      block_label[static_cast<std::size_t>(p.y) * w + p.x] = static_cast<int>(c);
    }
  }
  std::vector<PixelCluster> clusters(coarse_clusters.size());
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.foreground(x, y)) continue;
      const int c = block_label[static_cast<std::size_t>(y / f) * w + x / f];
      if (c >= 0) clusters[static_cast<std::size_t>(c)].pixels.push_back({x, y});
    }
  }
  return clusters;
}

std::vector<BoundingBox> boxes_from_clusters(const std::vector<PixelCluster>& clusters,
                                             Category category, ImageSize size,
                                             const ClusterParams& params) {
  params.validate();
  std::vector<BoundingBox> boxes;
  for (const auto& cluster : clusters) {
    if (cluster.pixels.empty()) continue;
    BoxRect r{std::numeric_limits<int>::max(), std::numeric_limits<int>::max(), -1, -1};
    for (const Pixel& p : cluster.pixels) {
      r.x_min = std::min(r.x_min, p.x);
      r.y_min = std::min(r.y_min, p.y);
      r.x_max = std::max(r.x_max, p.x + 1);
      r.y_max = std::max(r.y_max, p.y + 1);
    }
    const auto support = static_cast<std::int64_t>(cluster.pixels.size());
    const std::int64_t measure =
        params.threshold_mode == ThresholdMode::BoxArea ? r.area() : support;
    if (measure <= params.area_threshold) continue;
    boxes.push_back(make_bounding_box(r, category, support, size));
  }
  std::sort(boxes.begin(), boxes.end(), [](const BoundingBox& a, const BoundingBox& b) {
    if (a.rect.area() != b.rect.area()) return a.rect.area() > b.rect.area();
    if (a.rect.x_min != b.rect.x_min) return a.rect.x_min < b.rect.x_min;
    return a.rect.y_min < b.rect.y_min;
  });
  if (boxes.size() > static_cast<std::size_t>(params.max_boxes)) {
    boxes.resize(static_cast<std::size_t>(params.max_boxes));
  }
  return boxes;
}

StructuredAnnotation annotate_image(const ImageRecord& record, const std::vector<SegMask>& masks,
                                    const ClusterParams& params) {
  params.validate();
  StructuredAnnotation annotation;
  annotation.image_id = record.id;
  annotation.image_size = record.size();
  annotation.disease_labels = record.disease_labels;
  annotation.grading_labels = record.grading_labels;
  annotation.lesion_notes = record.lesion_notes;

  std::vector<SegMask> ordered = masks;
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const SegMask& a, const SegMask& b) { return a.category < b.category; });
  for (std::size_t i = 1; i < ordered.size(); ++i) {
    if (ordered[i].category == ordered[i - 1].category) {
      fail(Errc::InvalidArgument, "image " + record.id + " has two " +
                                      std::string(code(ordered[i].category)) + " masks");
    }
  }
  for (const auto& mask : ordered) {
    const auto validated = validate_mask(record, mask);
    const auto clusters = cluster_foreground(validated.raster, params);
    auto boxes = boxes_from_clusters(clusters, mask.category, record.size(), params);
    annotation.boxes.insert(annotation.boxes.end(), boxes.begin(), boxes.end());
  }
  check_annotation(annotation);
  return annotation;
}

BoxgenSummary run_boxgen(const std::vector<ImageRecord>& records,
                         const std::filesystem::path& masks_dir,
                         const std::filesystem::path& out_dir, const ClusterParams& params,
                         std::size_t concurrency) {
  params.validate();
  std::filesystem::create_directories(out_dir);
  BoxgenSummary summary;
  std::mutex mu;
  bounded_parallel_for(records.size(), concurrency, [&](std::size_t i) {
    const auto masks = discover_masks(masks_dir, records[i]);
    const auto annotation = annotate_image(records[i], masks, params);
    write_annotation(out_dir, annotation);
    std::lock_guard lock(mu);
    ++summary.images;
    summary.masks += masks.size();
    for (const auto& b : annotation.boxes) ++summary.boxes_per_category[b.category];
  });
  return summary;
}

}  // namespace fundus::boxgen
