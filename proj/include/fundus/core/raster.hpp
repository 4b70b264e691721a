#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fundus/core/types.hpp"

namespace fundus {

/// Single-channel 8-bit raster, row-major; nonzero pixels are foreground.
class MaskRaster {
 public:
  MaskRaster() = default;
  MaskRaster(int width, int height);
  MaskRaster(int width, int height, std::vector<std::uint8_t> pixels);

  [[nodiscard]] int width() const noexcept { return width_; }
  [[nodiscard]] int height() const noexcept { return height_; }
  [[nodiscard]] ImageSize size() const noexcept { return {width_, height_}; }

  [[nodiscard]] std::uint8_t at(int x, int y) const noexcept {
    return pixels_[static_cast<std::size_t>(y) * width_ + x];
  }
  [[nodiscard]] bool foreground(int x, int y) const noexcept { return at(x, y) != 0; }
  void set(int x, int y, std::uint8_t value) noexcept {
    pixels_[static_cast<std::size_t>(y) * width_ + x] = value;
  }

  [[nodiscard]] std::span<const std::uint8_t> pixels() const noexcept { return pixels_; }
  [[nodiscard]] std::int64_t foreground_count() const noexcept;

  /// Fills rect with `value`, clipped to the raster.
  void fill(const BoxRect& rect, std::uint8_t value = 255) noexcept;

  friend bool operator==(const MaskRaster&, const MaskRaster&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

/// Reads an 8-bit grayscale PNG. Throws UnreadableRaster for anything else.
MaskRaster read_mask_png(const std::filesystem::path& path);

/// Reads only the PNG header.
ImageSize read_png_size(const std::filesystem::path& path);

/// Writes an 8-bit grayscale PNG, creating parent directories.
void write_mask_png(const std::filesystem::path& path, const MaskRaster& raster);

/// Raster of a filled rectangle on an otherwise empty canvas.
MaskRaster rasterize_box(const BoxRect& rect, ImageSize size);

}  // namespace fundus
