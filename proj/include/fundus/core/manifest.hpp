#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fundus/core/raster.hpp"
#include "fundus/core/types.hpp"
#include "fundus/core/vocabulary.hpp"

namespace fundus {

struct ManifestOptions {
  /// Harmonizes disease labels and grade keys when set.
  const DiseaseVocabulary* vocabulary = nullptr;
  /// Reject records whose image file is absent.
  bool require_image_files = true;
};

/// Loads a JSON-lines manifest, one ImageRecord per non-blank line, in file
/// order. Relative image paths resolve against the manifest's directory.
/// Errors: ParseError and DuplicateId name the 1-based line; MissingImageFile.
std::vector<ImageRecord> load_manifest(const std::filesystem::path& path,
                                       const ManifestOptions& options = {});

/// Canonical JSON-lines text (sorted keys, one record per line).
std::string serialize_manifest(const std::vector<ImageRecord>& records);
void write_manifest(const std::filesystem::path& path, const std::vector<ImageRecord>& records);

struct ValidatedMask {
  SegMask mask;  // foreground_count populated
  MaskRaster raster;
};

/// Reads the mask raster, checks its dimensions against the record and counts
/// foreground pixels. Errors: UnreadableRaster, DimensionMismatch.
ValidatedMask validate_mask(const ImageRecord& record, const SegMask& mask);

/// masks/<image_id>/<CODE>.png
std::filesystem::path mask_path_for(const std::filesystem::path& masks_dir,
                                    const std::string& image_id, Category category);

/// True-label masks present on disk for the record, in category order.
std::vector<SegMask> discover_masks(const std::filesystem::path& masks_dir, const ImageRecord& record);

}  // namespace fundus
