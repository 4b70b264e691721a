#pragma once

#include <nlohmann/json.hpp>

#include "fundus/core/types.hpp"

namespace fundus {

using json = nlohmann::json;

std::string to_string(ImageSource s);
std::string to_string(Split s);
std::string to_string(LabelKind k);

json rect_to_json(const BoxRect& r);
/// Parses [x_min, y_min, x_max, y_max]; throws ParseError on shape errors.
BoxRect rect_from_json(const json& j);

json to_json(const BoundingBox& box);
BoundingBox bounding_box_from_json(const json& j, ImageSize size);

/// Canonical form: sorted keys, sets and maps in key order. resolved_image_path
/// is not part of the serialized record.
json to_json(const ImageRecord& record);
ImageRecord image_record_from_json(const json& j);

json to_json(const SegMask& mask);
SegMask seg_mask_from_json(const json& j);

json to_json(const StructuredAnnotation& annotation);
StructuredAnnotation annotation_from_json(const json& j);

}  // namespace fundus
