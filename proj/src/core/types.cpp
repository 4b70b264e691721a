#include "fundus/core/types.hpp"

#include <string>

#include "fundus/core/error.hpp"

namespace fundus {

namespace {

std::string describe(const BoxRect& r) {
  return "[" + std::to_string(r.x_min) + ", " + std::to_string(r.y_min) + ", " +
         std::to_string(r.x_max) + ", " + std::to_string(r.y_max) + "]";
}

}  // namespace

void check_rect(const BoxRect& rect, ImageSize size) {
  const bool ok = rect.x_min >= 0 && rect.y_min >= 0 && rect.x_min < rect.x_max &&
                  rect.y_min < rect.y_max && rect.x_max <= size.width &&
                  rect.y_max <= size.height;
  if (!ok) {
    fail(Errc::InvalidArgument, "box " + describe(rect) + " outside " +
                                    std::to_string(size.width) + "x" +
                                    std::to_string(size.height) + " image");
  }
}

BoundingBox make_bounding_box(const BoxRect& rect, Category category, std::int64_t pixel_support,
                              ImageSize size) {
  check_rect(rect, size);
  if (pixel_support <= 0) fail(Errc::InvalidArgument, "box pixel support must be positive");
  if (pixel_support > rect.area()) {
    fail(Errc::InvalidArgument, "box " + describe(rect) + " cannot hold " +
                                    std::to_string(pixel_support) + " pixels");
  }
  return BoundingBox{rect, category, pixel_support};
}

SegMask SegMask::true_label(std::string image_id, Category category, std::filesystem::path path) {
  SegMask m;
  m.image_id = std::move(image_id);
  m.category = category;
  m.mask_path = std::move(path);
  m.label_kind = LabelKind::TrueLabel;
  m.round = 0;
  return m;
}

SegMask SegMask::pseudo_label(std::string image_id, Category category, std::filesystem::path path,
                              int round) {
  if (round < 1) fail(Errc::InvalidArgument, "pseudo label round must be >= 1");
  SegMask m;
  m.image_id = std::move(image_id);
  m.category = category;
  m.mask_path = std::move(path);
  m.label_kind = LabelKind::PseudoLabel;
  m.round = round;
  return m;
}

std::vector<BoundingBox> StructuredAnnotation::boxes_of(Category c) const {
  std::vector<BoundingBox> out;
  for (const auto& b : boxes) {
    if (b.category == c) out.push_back(b);
  }
  return out;
}

std::set<Category> StructuredAnnotation::categories() const {
  std::set<Category> out;
  for (const auto& b : boxes) out.insert(b.category);
  return out;
}

void check_annotation(const StructuredAnnotation& annotation) {
  for (Category c : kAllCategories) {
    if (annotation.boxes_of(c).size() > kMaxBoxesPerCategory) {
      fail(Errc::InvalidArgument, "annotation " + annotation.image_id + " has more than " +
                                      std::to_string(kMaxBoxesPerCategory) + " " +
                                      std::string(code(c)) + " boxes");
    }
  }
}

}  // namespace fundus
