#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace fundus {

/// Region categories that receive bounding boxes: two anatomical structures
/// and three diabetic-retinopathy lesion types.
enum class Category {
  OpticCup,
  OpticDisc,
  HardExudates,
  CottonWoolSpots,
  Microaneurysms,
};

inline constexpr std::array<Category, 5> kAllCategories = {
    Category::OpticCup, Category::OpticDisc, Category::HardExudates,
    Category::CottonWoolSpots, Category::Microaneurysms};

/// Stable short code: OC, OD, EX, CWS, MA.
std::string_view code(Category c) noexcept;

/// Lower-case clinical name, e.g. "hard exudates".
std::string_view display_name(Category c) noexcept;

/// Accepts the short code (case-insensitive) or the display name.
std::optional<Category> parse_category(std::string_view text) noexcept;

}  // namespace fundus
