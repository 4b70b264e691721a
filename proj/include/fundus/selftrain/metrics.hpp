#pragma once

#include <cstdint>

#include "fundus/core/raster.hpp"
#include "fundus/core/types.hpp"

namespace fundus::selftrain {

/// Pixel counts behind every overlap metric. tp = |P ∩ T|, fp = |P \ T|,
/// fn = |T \ P|.
struct OverlapCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;

  [[nodiscard]] std::int64_t predicted() const noexcept { return tp + fp; }
  [[nodiscard]] std::int64_t truth() const noexcept { return tp + fn; }
  [[nodiscard]] std::int64_t union_size() const noexcept { return tp + fp + fn; }

  friend bool operator==(const OverlapCounts&, const OverlapCounts&) = default;
};

/// Throws DimensionMismatch when the rasters differ in size.
OverlapCounts overlap_counts(const MaskRaster& pred, const MaskRaster& truth);

/// 2|P∩T| / (|P|+|T|); 1.0 when both masks are empty.
double dice(const OverlapCounts& c) noexcept;
/// |P∩T| / |P∪T|; 1.0 when both masks are empty.
double iou_pixel(const OverlapCounts& c) noexcept;

double dice(const MaskRaster& pred, const MaskRaster& truth);
double iou_pixel(const MaskRaster& pred, const MaskRaster& truth);

/// File-backed variants; read both rasters from their mask paths.
double dice(const SegMask& pred, const SegMask& truth);
double iou_pixel(const SegMask& pred, const SegMask& truth);

}  // namespace fundus::selftrain
