#include "fundus/core/json_io.hpp"

#include "fundus/core/error.hpp"

namespace fundus {

std::string to_string(ImageSource s) { return s == ImageSource::InHouse ? "in_house" : "open_source"; }
std::string to_string(Split s) { return s == Split::HeldOut ? "held_out" : "train"; }
std::string to_string(LabelKind k) { return k == LabelKind::PseudoLabel ? "pseudo_label" : "true_label"; }

namespace {

template <typename T>
T required(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) fail(Errc::ParseError, std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(Errc::ParseError, std::string("field '") + key + "': " + e.what());
  }
}

Category category_field(const json& j, const char* key) {
  auto text = required<std::string>(j, key);
  auto c = parse_category(text);
  if (!c) fail(Errc::ParseError, "unknown category '" + text + "'");
  return *c;
}

}  // namespace

json rect_to_json(const BoxRect& r) { return json::array({r.x_min, r.y_min, r.x_max, r.y_max}); }

BoxRect rect_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) fail(Errc::ParseError, "box must be [x_min, y_min, x_max, y_max]");
  for (const auto& v : j) {
    if (!v.is_number_integer()) fail(Errc::ParseError, "box coordinates must be integers");
  }
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

json to_json(const BoundingBox& box) {
  return {{"category", std::string(code(box.category))},
          {"box", rect_to_json(box.rect)},
          {"pixel_support", box.pixel_support}};
}

BoundingBox bounding_box_from_json(const json& j, ImageSize size) {
  if (!j.is_object() || !j.contains("box")) fail(Errc::ParseError, "missing field 'box'");
  return make_bounding_box(rect_from_json(j.at("box")), category_field(j, "category"),
                           required<std::int64_t>(j, "pixel_support"), size);
}

json to_json(const ImageRecord& r) {
  json grades = json::object();
  for (const auto& [k, v] : r.grading_labels) grades[k] = v;
  return {{"id", r.id},
          {"image_path", r.image_path.generic_string()},
          {"width", r.width},
          {"height", r.height},
          {"disease_labels", r.disease_labels},
          {"grading_labels", grades},
          {"lesion_notes", r.lesion_notes},
          {"source", to_string(r.source)},
          {"split", to_string(r.split)}};
}

ImageRecord image_record_from_json(const json& j) {
  if (!j.is_object()) fail(Errc::ParseError, "record must be a JSON object");
  ImageRecord r;
  r.id = required<std::string>(j, "id");
  if (r.id.empty()) fail(Errc::ParseError, "empty id");
  r.image_path = required<std::string>(j, "image_path");
  r.width = required<int>(j, "width");
  r.height = required<int>(j, "height");
  if (r.width <= 0 || r.height <= 0) fail(Errc::ParseError, "width and height must be positive");
  if (j.contains("disease_labels")) {
    r.disease_labels = required<std::set<std::string>>(j, "disease_labels");
  }
  if (j.contains("grading_labels")) {
    r.grading_labels = required<std::map<std::string, int>>(j, "grading_labels");
  }
  if (j.contains("lesion_notes")) {
    r.lesion_notes = required<std::vector<std::string>>(j, "lesion_notes");
  }
  const auto source = j.value("source", std::string("open_source"));
  if (source == "open_source") r.source = ImageSource::OpenSource;
  else if (source == "in_house") r.source = ImageSource::InHouse;
  else fail(Errc::ParseError, "unknown source '" + source + "'");
  const auto split = j.value("split", std::string("train"));
  if (split == "train") r.split = Split::Train;
  else if (split == "held_out") r.split = Split::HeldOut;
  else fail(Errc::ParseError, "unknown split '" + split + "'");
  return r;
}

json to_json(const SegMask& m) {
  json j = {{"image_id", m.image_id},
            {"category", std::string(code(m.category))},
            {"mask_path", m.mask_path.generic_string()},
            {"label_kind", to_string(m.label_kind)},
            {"round", m.round}};
  if (m.foreground_count) j["foreground_count"] = *m.foreground_count;
  return j;
}

SegMask seg_mask_from_json(const json& j) {
  const auto image_id = required<std::string>(j, "image_id");
  const auto category = category_field(j, "category");
  const std::filesystem::path path = required<std::string>(j, "mask_path");
  const auto kind = j.value("label_kind", std::string("true_label"));
  SegMask m;
  if (kind == "true_label") {
    m = SegMask::true_label(image_id, category, path);
  } else if (kind == "pseudo_label") {
    m = SegMask::pseudo_label(image_id, category, path, required<int>(j, "round"));
  } else {
    fail(Errc::ParseError, "unknown label_kind '" + kind + "'");
  }
  if (j.contains("foreground_count")) m.foreground_count = required<std::int64_t>(j, "foreground_count");
  return m;
}

json to_json(const StructuredAnnotation& a) {
  json boxes = json::array();
  for (const auto& b : a.boxes) boxes.push_back(to_json(b));
  json grades = json::object();
  for (const auto& [k, v] : a.grading_labels) grades[k] = v;
  return {{"image_id", a.image_id},
          {"width", a.image_size.width},
          {"height", a.image_size.height},
          {"disease_labels", a.disease_labels},
          {"grading_labels", grades},
          {"boxes", boxes},
          {"lesion_notes", a.lesion_notes}};
}

StructuredAnnotation annotation_from_json(const json& j) {
  StructuredAnnotation a;
  a.image_id = required<std::string>(j, "image_id");
  a.image_size = {required<int>(j, "width"), required<int>(j, "height")};
  if (j.contains("disease_labels")) a.disease_labels = required<std::set<std::string>>(j, "disease_labels");
  if (j.contains("grading_labels")) a.grading_labels = required<std::map<std::string, int>>(j, "grading_labels");
  if (j.contains("lesion_notes")) a.lesion_notes = required<std::vector<std::string>>(j, "lesion_notes");
  if (j.contains("boxes")) {
    for (const auto& b : j.at("boxes")) a.boxes.push_back(bounding_box_from_json(b, a.image_size));
  }
  check_annotation(a);
  return a;
}

}  // namespace fundus
