#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fundus/core/category.hpp"

namespace fundus {

struct ImageSize {
  int width = 0;
  int height = 0;

  friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

/// Axis-aligned rectangle, [x_min, y_min, x_max, y_max], min-inclusive and
/// max-exclusive, origin at the top-left pixel.
struct BoxRect {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  [[nodiscard]] int width() const noexcept { return x_max - x_min; }
  [[nodiscard]] int height() const noexcept { return y_max - y_min; }
  [[nodiscard]] std::int64_t area() const noexcept {
    return static_cast<std::int64_t>(width()) * height();
  }
  [[nodiscard]] bool contains(int x, int y) const noexcept {
    return x >= x_min && x < x_max && y >= y_min && y < y_max;
  }

  friend auto operator<=>(const BoxRect&, const BoxRect&) = default;
};

/// Throws InvalidArgument unless 0 <= x_min < x_max <= width and likewise for y.
void check_rect(const BoxRect& rect, ImageSize size);

struct BoundingBox {
  BoxRect rect;
  Category category = Category::OpticDisc;
  std::int64_t pixel_support = 0;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// The only sanctioned way to build a BoundingBox from untrusted numbers:
/// validates coordinates against the image and requires positive support.
BoundingBox make_bounding_box(const BoxRect& rect, Category category,
                              std::int64_t pixel_support, ImageSize size);

enum class ImageSource { OpenSource, InHouse };
enum class Split { Train, HeldOut };

struct ImageRecord {
  std::string id;
  /// As written in the manifest; may be relative to the manifest directory.
  std::filesystem::path image_path;
  /// image_path resolved against the manifest directory. Not serialized.
  std::filesystem::path resolved_image_path;
  int width = 0;
  int height = 0;
  std::set<std::string> disease_labels;
  std::map<std::string, int> grading_labels;
  ImageSource source = ImageSource::OpenSource;
  Split split = Split::Train;
  std::vector<std::string> lesion_notes;

  [[nodiscard]] ImageSize size() const noexcept { return {width, height}; }
};

enum class LabelKind { TrueLabel, PseudoLabel };

struct SegMask {
  std::string image_id;
  Category category = Category::OpticDisc;
  std::filesystem::path mask_path;
  LabelKind label_kind = LabelKind::TrueLabel;
  /// 0 for true labels, >= 1 for pseudo labels.
  int round = 0;
  std::optional<std::int64_t> foreground_count;

  static SegMask true_label(std::string image_id, Category category, std::filesystem::path path);
  static SegMask pseudo_label(std::string image_id, Category category, std::filesystem::path path,
                              int round);
};

struct StructuredAnnotation {
  std::string image_id;
  ImageSize image_size;
  std::set<std::string> disease_labels;
  std::map<std::string, int> grading_labels;
  std::vector<BoundingBox> boxes;
  std::vector<std::string> lesion_notes;

  [[nodiscard]] std::vector<BoundingBox> boxes_of(Category c) const;
  [[nodiscard]] std::set<Category> categories() const;
};

inline constexpr std::size_t kMaxBoxesPerCategory = 3;

/// Throws InvalidArgument when a category carries more than three boxes.
void check_annotation(const StructuredAnnotation& annotation);

}  // namespace fundus
