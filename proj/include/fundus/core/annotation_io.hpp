#pragma once

#include <filesystem>
#include <vector>

#include "fundus/core/types.hpp"

namespace fundus {

/// annotations/<image_id>.json
std::filesystem::path annotation_path_for(const std::filesystem::path& dir, const std::string& image_id);

void write_annotation(const std::filesystem::path& dir, const StructuredAnnotation& annotation);
StructuredAnnotation read_annotation(const std::filesystem::path& file);

/// Every *.json file in the directory, sorted by image id.
std::vector<StructuredAnnotation> read_annotations(const std::filesystem::path& dir);

}  // namespace fundus
