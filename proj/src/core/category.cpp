#include "fundus/core/category.hpp"

#include <algorithm>
#include <cctype>
#include <string>

namespace fundus {

std::string_view code(Category c) noexcept {
  switch (c) {
    case Category::OpticCup: return "OC";
    case Category::OpticDisc: return "OD";
    case Category::HardExudates: return "EX";
    case Category::CottonWoolSpots: return "CWS";
    case Category::Microaneurysms: return "MA";
  }
  return "";
}

std::string_view display_name(Category c) noexcept {
  switch (c) {
    case Category::OpticCup: return "optic cup";
    case Category::OpticDisc: return "optic disc";
    case Category::HardExudates: return "hard exudates";
    case Category::CottonWoolSpots: return "cotton-wool spots";
    case Category::Microaneurysms: return "microaneurysms";
  }
  return "";
}

std::optional<Category> parse_category(std::string_view text) noexcept {
  std::string lowered(text);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  for (Category c : kAllCategories) {
    std::string short_code(code(c));
    std::transform(short_code.begin(), short_code.end(), short_code.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    if (lowered == short_code || lowered == display_name(c)) return c;
  }
  return std::nullopt;
}

}  // namespace fundus
