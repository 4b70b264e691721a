#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fundus/boxgen/dbscan.hpp"
#include "fundus/core/raster.hpp"
#include "fundus/core/rng.hpp"
#include "fundus/core/types.hpp"

namespace fundus::testkit {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& prefix = "fundus");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// Filled disc.
void paint_disc(MaskRaster& mask, int cx, int cy, int radius);

/// Random mask with each pixel foreground with probability p.
MaskRaster random_mask(SeededRng& rng, int width, int height, double p);

/// Random blobs (filled rectangles and discs) of assorted sizes.
MaskRaster random_blob_mask(SeededRng& rng, int width, int height, int blobs);

/// Synthetic mask with `components` filled shapes whose pairwise gap exceeds
/// `min_gap` pixels. Every shape is solid, hence dense for any epsilon >= 1.
MaskRaster separated_components_mask(SeededRng& rng, int width, int height, int components,
                                     double min_gap);

/// Reference DBSCAN: O(n^2) sequential expansion in row-major order, exactly
/// as the textbook algorithm is usually written.
std::vector<int> naive_dbscan_labels(const std::vector<boxgen::Pixel>& points, double epsilon,
                                     int min_samples);

/// Tight boxes of 8-connected foreground components with pixel counts.
struct Component {
  BoxRect rect;
  std::int64_t pixels = 0;
};
std::vector<Component> connected_components(const MaskRaster& mask);

/// Pixel-scan foreground count.
std::int64_t count_foreground_by_scan(const MaskRaster& mask);

/// Writes a blank 1x1 PNG used as a stand-in color image.
void write_placeholder_image(const std::filesystem::path& path);

/// Small labeled corpus on disk: manifest.jsonl, images/, masks/. Images
/// cycle through diabetic retinopathy (with lesion masks), glaucoma,
/// cataract, hypertensive retinopathy and a normal fundus; the last image is
/// held out.
struct SyntheticCorpus {
  std::filesystem::path manifest;
  std::filesystem::path masks;
  std::vector<ImageRecord> records;
};
SyntheticCorpus write_synthetic_corpus(const std::filesystem::path& dir, int images, std::uint64_t seed);

/// A forked child whose stdout is readable through `out`.
struct ChildProcess {
  int pid = -1;
  int out = -1;
};

/// Environment entries with an empty value are unset in the child.
ChildProcess spawn_child(const std::vector<std::string>& argv,
                         const std::vector<std::pair<std::string, std::string>>& env = {});
/// Next stdout line; throws std::runtime_error after `timeout_ms`.
std::string read_line(const ChildProcess& child, int timeout_ms = 10000);
/// Exit status, or 128 + signal.
int wait_child(ChildProcess& child);

}  // namespace fundus::testkit
