#include "fundus/core/annotation_io.hpp"

#include <algorithm>
#include <fstream>

#include "fundus/core/error.hpp"
#include "fundus/core/json_io.hpp"

namespace fundus {

std::filesystem::path annotation_path_for(const std::filesystem::path& dir, const std::string& image_id) {
  return dir / (image_id + ".json");
}

void write_annotation(const std::filesystem::path& dir, const StructuredAnnotation& annotation) {
  std::filesystem::create_directories(dir);
  const auto path = annotation_path_for(dir, annotation.image_id);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::IoError, "cannot write " + path.string());
  out << to_json(annotation).dump(2) << '\n';
}

StructuredAnnotation read_annotation(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) fail(Errc::IoError, "cannot open " + file.string());
  try {
    return annotation_from_json(json::parse(in));
  } catch (const json::exception& e) {
    fail(Errc::ParseError, file.string() + ": " + e.what());
  }
}

std::vector<StructuredAnnotation> read_annotations(const std::filesystem::path& dir) {
  std::vector<StructuredAnnotation> out;
  if (!std::filesystem::exists(dir)) return out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      out.push_back(read_annotation(entry.path()));
    }
  }
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.image_id < b.image_id; });
  return out;
}

}  // namespace fundus
