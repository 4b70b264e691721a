#include "fundus/boxgen/dbscan.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "fundus/core/error.hpp"

namespace fundus::boxgen {

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t i) {
    while (parent_[i] != i) {
      parent_[i] = parent_[parent_[i]];
      i = parent_[i];
    }
    return i;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a > b) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<std::size_t> parent_;
};

// Sorted x coordinates of selected pixels, one list per row.
using RowLists = std::vector<std::vector<int>>;

std::size_t count_in_row(const std::vector<int>& row, int x0, int x1) {
  auto lo = std::lower_bound(row.begin(), row.end(), x0);
  auto hi = std::upper_bound(lo, row.end(), x1);
  return static_cast<std::size_t>(hi - lo);
}

bool any_in_row(const std::vector<int>& row, int x0, int x1) {
  auto lo = std::lower_bound(row.begin(), row.end(), x0);
  return lo != row.end() && *lo <= x1;
}

}  // namespace

std::vector<PixelCluster> dbscan_pixels(const MaskRaster& mask, double epsilon, int min_samples) {
  if (!(epsilon > 0)) fail(Errc::InvalidArgument, "epsilon must be positive");
  if (min_samples < 1) fail(Errc::InvalidArgument, "min_samples must be >= 1");

  const int width = mask.width();
  const int height = mask.height();
  const double eps2 = epsilon * epsilon;
  const int reach = static_cast<int>(std::floor(epsilon));

  // half_width[dy]: largest w with w^2 + dy^2 <= eps^2.
  std::vector<int> half_width(static_cast<std::size_t>(reach) + 1);
  for (int dy = 0; dy <= reach; ++dy) {
    const double rest = eps2 - static_cast<double>(dy) * dy;
    auto w = static_cast<long long>(std::floor(std::sqrt(std::max(rest, 0.0))));
    while (static_cast<double>((w + 1) * (w + 1)) <= rest) ++w;
    while (w > 0 && static_cast<double>(w * w) > rest) --w;
    half_width[static_cast<std::size_t>(dy)] = static_cast<int>(w);
  }

  std::vector<Pixel> fg;
  RowLists fg_rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (mask.foreground(x, y)) {
        fg.push_back({x, y});
        fg_rows[static_cast<std::size_t>(y)].push_back(x);
      }
    }
  }
  if (fg.empty()) return {};

  // Core test, scanning rows outward from the pixel so dense regions exit early.
  const auto needed = static_cast<std::size_t>(min_samples);
  std::vector<char> is_core(fg.size(), 0);
  for (std::size_t i = 0; i < fg.size(); ++i) {
    const Pixel p = fg[i];
    std::size_t count = 0;
    for (int dy = 0; dy <= reach && count < needed; ++dy) {
      const int w = half_width[static_cast<std::size_t>(dy)];
      for (int sign : {1, -1}) {
        if (dy == 0 && sign < 0) continue;
        const int y = p.y + sign * dy;
        if (y < 0 || y >= height) continue;
        count += count_in_row(fg_rows[static_cast<std::size_t>(y)], p.x - w, p.x + w);
      }
    }
    is_core[i] = count >= needed ? 1 : 0;
  }

  // Grid cells small enough that any two pixels in one cell are eps-close.
  int side = std::max(1, static_cast<int>(std::floor(epsilon / std::sqrt(2.0))) + 1);
  while (side > 1 && 2.0 * (side - 1) * (side - 1) > eps2) --side;
  const int cells_x = (width + side - 1) / side;
  const int cells_y = (height + side - 1) / side;
  auto cell_of = [&](Pixel p) {
    return static_cast<std::size_t>(p.y / side) * static_cast<std::size_t>(cells_x) +
           static_cast<std::size_t>(p.x / side);
  };

  std::vector<std::vector<std::size_t>> cell_cores(static_cast<std::size_t>(cells_x) * cells_y);
  RowLists core_rows(static_cast<std::size_t>(height));
  for (std::size_t i = 0; i < fg.size(); ++i) {
    if (!is_core[i]) continue;
    cell_cores[cell_of(fg[i])].push_back(i);
    core_rows[static_cast<std::size_t>(fg[i].y)].push_back(fg[i].x);
  }

  // Cell offsets whose nearest pixels can be within epsilon; half-plane only.
  struct Offset {
    int dx, dy;
  };
  std::vector<Offset> offsets;
  const int span = reach / side + 2;
  for (int dy = 0; dy <= span; ++dy) {
    for (int dx = -span; dx <= span; ++dx) {
      if (dy == 0 && dx <= 0) continue;
      const long long gx = dx == 0 ? 0 : static_cast<long long>(std::abs(dx) - 1) * side + 1;
      const long long gy = dy == 0 ? 0 : static_cast<long long>(dy - 1) * side + 1;
      if (static_cast<double>(gx * gx + gy * gy) <= eps2) offsets.push_back({dx, dy});
    }
  }

  DisjointSets cells(cell_cores.size());
  for (int cy = 0; cy < cells_y; ++cy) {
    for (int cx = 0; cx < cells_x; ++cx) {
      const std::size_t a = static_cast<std::size_t>(cy) * cells_x + cx;
      if (cell_cores[a].empty()) continue;
      for (const auto& o : offsets) {
        const int bx = cx + o.dx;
        const int by = cy + o.dy;
        if (bx < 0 || bx >= cells_x || by < 0 || by >= cells_y) continue;
        const std::size_t b = static_cast<std::size_t>(by) * cells_x + bx;
        if (cell_cores[b].empty() || cells.find(a) == cells.find(b)) continue;
        const int bx0 = bx * side;
        const int bx1 = std::min(width, bx0 + side) - 1;
        const int by0 = by * side;
        const int by1 = std::min(height, by0 + side) - 1;
        bool linked = false;
        for (std::size_t i : cell_cores[a]) {
          const Pixel p = fg[i];
          const int r0 = std::max(by0, p.y - reach);
          const int r1 = std::min(by1, p.y + reach);
          for (int y = r0; y <= r1 && !linked; ++y) {
            const int w = half_width[static_cast<std::size_t>(std::abs(y - p.y))];
            const int x0 = std::max(bx0, p.x - w);
            const int x1 = std::min(bx1, p.x + w);
            if (x0 <= x1 && any_in_row(core_rows[static_cast<std::size_t>(y)], x0, x1)) linked = true;
          }
          if (linked) break;
        }
        if (linked) cells.unite(a, b);
      }
    }
  }

  // Cluster ids in order of each cluster's first core pixel (row-major).
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> cluster_of_root(cell_cores.size(), kNone);
  std::vector<std::size_t> label(fg.size(), kNone);
  std::size_t n_clusters = 0;
  for (std::size_t i = 0; i < fg.size(); ++i) {
    if (!is_core[i]) continue;
    const std::size_t root = cells.find(cell_of(fg[i]));
    if (cluster_of_root[root] == kNone) cluster_of_root[root] = n_clusters++;
    label[i] = cluster_of_root[root];
  }

  // Border pixels: fewer than min_samples foreground pixels lie in their disk,
  // so the handful of core pixels there are enumerated directly.
  std::vector<std::vector<std::size_t>> core_row_labels(static_cast<std::size_t>(height));
  for (std::size_t i = 0; i < fg.size(); ++i) {
    if (is_core[i]) core_row_labels[static_cast<std::size_t>(fg[i].y)].push_back(label[i]);
  }
  for (std::size_t i = 0; i < fg.size(); ++i) {
    if (is_core[i]) continue;
    const Pixel p = fg[i];
    std::size_t best = kNone;
    for (int y = std::max(0, p.y - reach); y <= std::min(height - 1, p.y + reach); ++y) {
      const auto& row = core_rows[static_cast<std::size_t>(y)];
      if (row.empty()) continue;
      const int w = half_width[static_cast<std::size_t>(std::abs(y - p.y))];
      auto lo = std::lower_bound(row.begin(), row.end(), p.x - w);
      for (auto it = lo; it != row.end() && *it <= p.x + w; ++it) {
        const auto k = static_cast<std::size_t>(it - row.begin());
        best = std::min(best, core_row_labels[static_cast<std::size_t>(y)][k]);
      }
    }
    label[i] = best;
  }

  std::vector<PixelCluster> clusters(n_clusters);
  for (std::size_t i = 0; i < fg.size(); ++i) {
    if (label[i] != kNone) clusters[label[i]].pixels.push_back(fg[i]);
  }
  return clusters;
}

}  // namespace fundus::boxgen
