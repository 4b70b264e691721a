#include "fundus/expansion/box_tokens.hpp"

#include <charconv>
#include <cmath>

#include "fundus/core/error.hpp"

namespace fundus::expansion {
namespace {

constexpr std::string_view kOpen = "<box>";
constexpr std::string_view kClose = "</box>";

long long scale(long long v, int extent) {
  return std::llround(static_cast<double>(v) * 1000.0 / extent);
}

std::vector<long long> parse_body(std::string_view body) {
  std::vector<long long> out;
  std::size_t i = 0;
  auto skip_space = [&] {
    while (i < body.size() && body[i] == ' ') ++i;
  };
  skip_space();
  if (i >= body.size() || body[i] != '[') return {};
  ++i;
  for (int k = 0; k < 4; ++k) {
    skip_space();
    long long v = 0;
    auto [ptr, ec] = std::from_chars(body.data() + i, body.data() + body.size(), v);
    if (ec != std::errc()) return {};
    i = static_cast<std::size_t>(ptr - body.data());
    out.push_back(v);
    skip_space();
    const char want = k == 3 ? ']' : ',';
    if (i >= body.size() || body[i] != want) return {};
    ++i;
  }
  skip_space();
  if (i != body.size()) return {};
  return out;
}

}  // namespace

BoxStyle parse_box_style(std::string_view text) {
  if (text == "absolute") return BoxStyle::Absolute;
  if (text == "normalized" || text == "normalized_1000") return BoxStyle::Normalized1000;
  fail(Errc::InvalidArgument, "unknown box style '" + std::string(text) + "' (absolute|normalized)");
}

std::string to_string(BoxStyle style) {
  return style == BoxStyle::Absolute ? "absolute" : "normalized";
}

std::string box_list(const BoxRect& r) {
  return "[" + std::to_string(r.x_min) + ", " + std::to_string(r.y_min) + ", " + std::to_string(r.x_max) +
         ", " + std::to_string(r.y_max) + "]";
}

std::string box_token(const BoxRect& rect) {
  return std::string(kOpen) + box_list(rect) + std::string(kClose);
}

std::string box_token(const BoxRect& rect, ImageSize size, BoxStyle style) {
  if (style == BoxStyle::Absolute) return box_token(rect);
  const auto x0 = scale(rect.x_min, size.width), y0 = scale(rect.y_min, size.height);
  const auto x1 = scale(rect.x_max, size.width), y1 = scale(rect.y_max, size.height);
  return std::string(kOpen) + "[" + std::to_string(x0) + ", " + std::to_string(y0) + ", " + std::to_string(x1) +
         ", " + std::to_string(y1) + "]" + std::string(kClose);
}

std::vector<BoxTokenMatch> find_box_tokens(std::string_view text) {
  std::vector<BoxTokenMatch> out;
  std::size_t pos = 0;
  while ((pos = text.find(kOpen, pos)) != std::string_view::npos) {
    BoxTokenMatch m;
    m.offset = pos;
    const auto body_start = pos + kOpen.size();
    const auto close = text.find(kClose, body_start);
    const auto next_open = text.find(kOpen, body_start);
    if (close == std::string_view::npos || (next_open != std::string_view::npos && next_open < close)) {
      const auto end = next_open == std::string_view::npos ? text.size() : next_open;
      m.length = end - pos;
      out.push_back(m);
      pos = end;
      continue;
    }
    m.length = close + kClose.size() - pos;
    m.values = parse_body(text.substr(body_start, close - body_start));
    pos = close + kClose.size();
    out.push_back(std::move(m));
  }
  return out;
}

bool has_box_token(std::string_view text) { return text.find(kOpen) != std::string_view::npos; }

std::string restyle_box_tokens(std::string_view text, ImageSize size, BoxStyle style) {
  if (style == BoxStyle::Absolute) return std::string(text);
  std::string out;
  std::size_t last = 0;
  for (const auto& m : find_box_tokens(text)) {
    if (!m.well_formed()) continue;
    out.append(text.substr(last, m.offset - last));
    const BoxRect r{static_cast<int>(m.values[0]), static_cast<int>(m.values[1]), static_cast<int>(m.values[2]),
                    static_cast<int>(m.values[3])};
    out += box_token(r, size, style);
    last = m.offset + m.length;
  }
  out.append(text.substr(last));
  return out;
}

}  // namespace fundus::expansion
