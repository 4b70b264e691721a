#pragma once

#include <vector>

#include "fundus/core/raster.hpp"

namespace fundus::boxgen {

struct Pixel {
  int x = 0;
  int y = 0;

  friend auto operator<=>(const Pixel&, const Pixel&) = default;
};

/// One density cluster; pixels are listed in row-major order.
struct PixelCluster {
  std::vector<Pixel> pixels;
};

/// DBSCAN over the foreground pixel coordinates of a raster with Euclidean
/// distance. A pixel is a core point when at least `min_samples` foreground
/// pixels (itself included) lie within distance <= epsilon.
///
/// Clusters are returned in discovery order of a row-major scan (ordered by
/// their first core pixel). A border pixel reachable from several clusters
/// belongs to the earliest one, which is what sequential expansion in
/// row-major order produces. Noise pixels are dropped.
///
/// Neighbor queries use a uniform grid with cells of side about
/// epsilon / sqrt(2), so every pair of pixels in one cell is epsilon-close and
/// core pixels sharing a cell are merged without distance checks.
std::vector<PixelCluster> dbscan_pixels(const MaskRaster& mask, double epsilon, int min_samples);

}  // namespace fundus::boxgen
