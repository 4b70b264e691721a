#include "fundus/selftrain/metrics.hpp"

#include <string>

#include "fundus/core/error.hpp"

namespace fundus::selftrain {

OverlapCounts overlap_counts(const MaskRaster& pred, const MaskRaster& truth) {
  if (pred.size() != truth.size()) {
    fail(Errc::DimensionMismatch, "prediction is " + std::to_string(pred.width()) + "x" +
                                      std::to_string(pred.height()) + ", truth is " +
                                      std::to_string(truth.width()) + "x" +
                                      std::to_string(truth.height()));
  }
  OverlapCounts c;
  const auto p = pred.pixels();
  const auto t = truth.pixels();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool in_p = p[i] != 0;
    const bool in_t = t[i] != 0;
    c.tp += in_p && in_t;
    c.fp += in_p && !in_t;
    c.fn += !in_p && in_t;
  }
  return c;
}

double dice(const OverlapCounts& c) noexcept {
  const auto denom = c.predicted() + c.truth();
  if (denom == 0) return 1.0;
  return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

double iou_pixel(const OverlapCounts& c) noexcept {
  const auto denom = c.union_size();
  if (denom == 0) return 1.0;
  return static_cast<double>(c.tp) / static_cast<double>(denom);
}

double dice(const MaskRaster& pred, const MaskRaster& truth) { return dice(overlap_counts(pred, truth)); }

double iou_pixel(const MaskRaster& pred, const MaskRaster& truth) {
  return iou_pixel(overlap_counts(pred, truth));
}

double dice(const SegMask& pred, const SegMask& truth) {
  return dice(read_mask_png(pred.mask_path), read_mask_png(truth.mask_path));
}

double iou_pixel(const SegMask& pred, const SegMask& truth) {
  return iou_pixel(read_mask_png(pred.mask_path), read_mask_png(truth.mask_path));
}

}  // namespace fundus::selftrain
