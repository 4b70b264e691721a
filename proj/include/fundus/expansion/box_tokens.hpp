#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "fundus/core/types.hpp"

namespace fundus::expansion {

/// Coordinates inside <box>...</box> are absolute pixels by default; the
/// normalized form rescales each axis to 0..1000 for trainers that expect it.
enum class BoxStyle { Absolute, Normalized1000 };

BoxStyle parse_box_style(std::string_view text);
std::string to_string(BoxStyle style);

/// "<box>[x_min, y_min, x_max, y_max]</box>"
std::string box_token(const BoxRect& rect);
std::string box_token(const BoxRect& rect, ImageSize size, BoxStyle style);

/// "[x_min, y_min, x_max, y_max]" without the tags.
std::string box_list(const BoxRect& rect);

struct BoxTokenMatch {
  std::size_t offset = 0;
  std::size_t length = 0;
  /// Empty when the token body is not four integers.
  std::vector<long long> values;
  bool well_formed() const { return values.size() == 4; }
};

/// All <box>...</box> spans in order, well formed or not. An opening tag with
/// no closing tag is reported as malformed with length up to the end of text.
std::vector<BoxTokenMatch> find_box_tokens(std::string_view text);

/// True when the text contains an opening box tag.
bool has_box_token(std::string_view text);

/// Rewrites every well-formed absolute token in the given style.
std::string restyle_box_tokens(std::string_view text, ImageSize size, BoxStyle style);

}  // namespace fundus::expansion
