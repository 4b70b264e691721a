#include "fundus/core/raster.hpp"

#include <png.h>

#include <algorithm>
#include <cstring>

#include "fundus/core/error.hpp"

namespace fundus {

MaskRaster::MaskRaster(int width, int height)
    : width_(width), height_(height),
      pixels_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0) {
  if (width <= 0 || height <= 0) fail(Errc::InvalidArgument, "raster dimensions must be positive");
}

MaskRaster::MaskRaster(int width, int height, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (width <= 0 || height <= 0) fail(Errc::InvalidArgument, "raster dimensions must be positive");
  if (pixels_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    fail(Errc::InvalidArgument, "pixel buffer does not match raster dimensions");
  }
}

std::int64_t MaskRaster::foreground_count() const noexcept {
  return static_cast<std::int64_t>(
      std::count_if(pixels_.begin(), pixels_.end(), [](std::uint8_t v) { return v != 0; }));
}

void MaskRaster::fill(const BoxRect& rect, std::uint8_t value) noexcept {
  const int x0 = std::max(rect.x_min, 0);
  const int y0 = std::max(rect.y_min, 0);
  const int x1 = std::min(rect.x_max, width_);
  const int y1 = std::min(rect.y_max, height_);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) set(x, y, value);
  }
}

namespace {

struct PngReader {
  png_image image{};
  PngReader() {
    image.version = PNG_IMAGE_VERSION;
  }
  ~PngReader() { png_image_free(&image); }
  PngReader(const PngReader&) = delete;
  PngReader& operator=(const PngReader&) = delete;
};

void begin_read(PngReader& reader, const std::filesystem::path& path) {
  if (!png_image_begin_read_from_file(&reader.image, path.c_str())) {
    fail(Errc::UnreadableRaster, path.string() + ": " + reader.image.message);
  }
}

}  // namespace

ImageSize read_png_size(const std::filesystem::path& path) {
  PngReader reader;
  begin_read(reader, path);
  return {static_cast<int>(reader.image.width), static_cast<int>(reader.image.height)};
}

MaskRaster read_mask_png(const std::filesystem::path& path) {
  PngReader reader;
  begin_read(reader, path);
  if (reader.image.format != PNG_FORMAT_GRAY) {
    fail(Errc::UnreadableRaster, path.string() + ": expected an 8-bit single-channel PNG");
  }
  const int w = static_cast<int>(reader.image.width);
  const int h = static_cast<int>(reader.image.height);
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(reader.image));
  if (!png_image_finish_read(&reader.image, nullptr, pixels.data(), 0, nullptr)) {
    fail(Errc::UnreadableRaster, path.string() + ": " + reader.image.message);
  }
  return MaskRaster(w, h, std::move(pixels));
}

void write_mask_png(const std::filesystem::path& path, const MaskRaster& raster) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(raster.width());
  image.height = static_cast<png_uint_32>(raster.height());
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, raster.pixels().data(), 0, nullptr)) {
    std::string message = image.message;
    png_image_free(&image);
    fail(Errc::IoError, path.string() + ": " + message);
  }
}

MaskRaster rasterize_box(const BoxRect& rect, ImageSize size) {
  MaskRaster raster(size.width, size.height);
  raster.fill(rect);
  return raster;
}

}  // namespace fundus
