#include "fundus/eval/localization.hpp"

#include <fstream>

#include "fundus/core/category.hpp"
#include "fundus/core/error.hpp"
#include "fundus/eval/report.hpp"

namespace fundus::eval {

selftrain::OverlapCounts box_region_counts(const BoundingBox& box, const MaskRaster& truth) {
  check_rect(box.rect, truth.size());
  std::int64_t inside = 0;
  std::int64_t total = 0;
  for (int y = 0; y < truth.height(); ++y) {
    for (int x = 0; x < truth.width(); ++x) {
      if (!truth.foreground(x, y)) continue;
      ++total;
      if (box.rect.contains(x, y)) ++inside;
    }
  }
  return {inside, box.rect.area() - inside, total - inside};
}

double iou_box_vs_region(const BoundingBox& box, const MaskRaster& truth) {
  return selftrain::iou_pixel(box_region_counts(box, truth));
}

double iou_box_vs_region(const BoundingBox& box, const SegMask& truth, ImageSize image_size) {
  const auto raster = read_mask_png(truth.mask_path);
  if (raster.size() != image_size) {
    fail(Errc::DimensionMismatch, "mask " + truth.mask_path.string() + " is " + std::to_string(raster.width()) + "x" +
                                      std::to_string(raster.height()) + ", image is " +
                                      std::to_string(image_size.width) + "x" + std::to_string(image_size.height));
  }
  return iou_box_vs_region(box, raster);
}

namespace {

std::vector<json> read_rows(const std::filesystem::path& input) {
  std::ifstream in(input);
  if (!in) fail(Errc::IoError, "cannot read " + input.string());
  std::vector<json> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::exception& e) {
      fail(Errc::ParseError, input.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() ? base.parent_path() / path : path;
}

Category category_of(const json& row) {
  const auto name = row.at("category").get<std::string>();
  auto c = parse_category(name);
  if (!c) fail(Errc::InvalidArgument, "unknown category '" + name + "'");
  return *c;
}

}  // namespace

RegionReport evaluate_box_iou(const std::filesystem::path& input) {
  RegionReport report{"box_iou", {}};
  for (const auto& row : read_rows(input)) {
    try {
      const auto c = category_of(row);
      const auto& b = row.at("box");
      if (!b.is_array() || b.size() != 4) fail(Errc::InvalidArgument, "box must have four coordinates");
      BoxRect rect{b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()};
      const ImageSize size{row.at("width").get<int>(), row.at("height").get<int>()};
      const auto box = make_bounding_box(rect, c, rect.area(), size);
      const auto truth = SegMask::true_label(row.value("image_id", std::string{}), c,
                                             resolve(input, row.at("mask").get<std::string>()));
      report.cases.push_back({row.at("id").get<std::string>(), std::string(code(c)),
                              iou_box_vs_region(box, truth, size), 0.0});
    } catch (const json::exception& e) {
      fail(Errc::ParseError, std::string("box IoU row: ") + e.what());
    }
  }
  return report;
}

RegionReport evaluate_segmentation(const std::filesystem::path& input) {
  RegionReport report{"segmentation", {}};
  for (const auto& row : read_rows(input)) {
    try {
      const auto c = category_of(row);
      const auto pred = read_mask_png(resolve(input, row.at("prediction").get<std::string>()));
      const auto truth = read_mask_png(resolve(input, row.at("truth").get<std::string>()));
      const auto counts = selftrain::overlap_counts(pred, truth);
      report.cases.push_back({row.at("id").get<std::string>(), std::string(code(c)), selftrain::dice(counts),
                              selftrain::iou_pixel(counts)});
    } catch (const json::exception& e) {
      fail(Errc::ParseError, std::string("segmentation row: ") + e.what());
    }
  }
  return report;
}

namespace {
struct Mean {
  double sum = 0, sum2 = 0;
  std::size_t n = 0;
};
}  // namespace

json RegionReport::to_json() const {
  const bool seg = kind == "segmentation";
  std::map<std::string, Mean> by_cat;
  Mean all;
  json rows = json::array();
  for (const auto& c : cases) {
    for (Mean* m : {&by_cat[c.category], &all}) {
      m->sum += c.value;
      m->sum2 += c.secondary;
      ++m->n;
    }
    json row = {{"id", c.id}, {"category", c.category}};
    if (seg) {
      row["dice"] = c.value;
      row["iou"] = c.secondary;
    } else {
      row["iou"] = c.value;
    }
    rows.push_back(row);
  }
  auto summary = [&](const Mean& m) {
    const double n = m.n ? static_cast<double>(m.n) : 1.0;
    json s = {{"cases", m.n}};
    if (seg) {
      s["dice"] = m.sum / n;
      s["iou"] = m.sum2 / n;
    } else {
      s["iou"] = m.sum / n;
    }
    return s;
  };
  json cats = json::object();
  for (const auto& [name, m] : by_cat) cats[name] = summary(m);
  return {{"kind", kind}, {"overall", summary(all)}, {"per_category", cats}, {"cases", rows}};
}

std::string RegionReport::to_csv() const {
  const json doc = to_json();
  const bool seg = kind == "segmentation";
  std::string out = seg ? "category,cases,dice,iou\n" : "category,cases,iou\n";
  auto row = [&](const std::string& name, const json& s) {
    out += csv_field(name) + "," + s["cases"].dump();
    if (seg) out += "," + s["dice"].dump();
    out += "," + s["iou"].dump() + "\n";
  };
  for (const auto& [name, s] : doc["per_category"].items()) row(name, s);
  row("overall", doc["overall"]);
  return out;
}

}  // namespace fundus::eval
