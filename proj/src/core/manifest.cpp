#include "fundus/core/manifest.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "fundus/core/error.hpp"
#include "fundus/core/json_io.hpp"

namespace fundus {

std::vector<ImageRecord> load_manifest(const std::filesystem::path& path,
                                       const ManifestOptions& options) {
  std::ifstream in(path);
  if (!in) fail(Errc::IoError, "cannot open manifest " + path.string());
  const auto base = path.parent_path();

  std::vector<ImageRecord> records;
  std::map<std::string, int> first_line;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    ImageRecord record;
    try {
      record = image_record_from_json(json::parse(line));
    } catch (const json::exception& e) {
      fail(Errc::ParseError, where + ": " + e.what());
    } catch (const Error& e) {
      if (e.code() != Errc::ParseError) throw;
      fail(Errc::ParseError, where + ": " + e.what());
    }
    auto [it, inserted] = first_line.emplace(record.id, line_no);
    if (!inserted) {
      fail(Errc::DuplicateId, where + ": id '" + record.id + "' already defined on line " +
                                  std::to_string(it->second));
    }
    if (options.vocabulary) {
      std::set<std::string> labels;
      for (const auto& l : record.disease_labels) labels.insert(options.vocabulary->canonicalize(l));
      record.disease_labels = std::move(labels);
      std::map<std::string, int> grades;
      for (const auto& [k, v] : record.grading_labels) grades[options.vocabulary->canonicalize(k)] = v;
      record.grading_labels = std::move(grades);
    }
    record.resolved_image_path =
        record.image_path.is_absolute() ? record.image_path : base / record.image_path;
    if (options.require_image_files && !std::filesystem::exists(record.resolved_image_path)) {
      fail(Errc::MissingImageFile, where + ": " + record.resolved_image_path.string());
    }
    records.push_back(std::move(record));
  }
  return records;
}

std::string serialize_manifest(const std::vector<ImageRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ImageRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::IoError, "cannot write " + path.string());
  out << serialize_manifest(records);
}

ValidatedMask validate_mask(const ImageRecord& record, const SegMask& mask) {
  if (mask.image_id != record.id) {
    fail(Errc::InvalidArgument, "mask for '" + mask.image_id + "' checked against record '" + record.id + "'");
  }
  MaskRaster raster = read_mask_png(mask.mask_path);
  if (raster.width() != record.width || raster.height() != record.height) {
    std::ostringstream msg;
    msg << mask.mask_path.string() << " is " << raster.width() << "x" << raster.height()
        << " but image " << record.id << " is " << record.width << "x" << record.height;
    fail(Errc::DimensionMismatch, msg.str());
  }
  SegMask validated = mask;
  validated.foreground_count = raster.foreground_count();
  return {std::move(validated), std::move(raster)};
}

std::filesystem::path mask_path_for(const std::filesystem::path& masks_dir,
                                    const std::string& image_id, Category category) {
  return masks_dir / image_id / (std::string(code(category)) + ".png");
}

std::vector<SegMask> discover_masks(const std::filesystem::path& masks_dir, const ImageRecord& record) {
  std::vector<SegMask> out;
  for (Category c : kAllCategories) {
    auto p = mask_path_for(masks_dir, record.id, c);
    if (std::filesystem::exists(p)) out.push_back(SegMask::true_label(record.id, c, p));
  }
  return out;
}

}  // namespace fundus
