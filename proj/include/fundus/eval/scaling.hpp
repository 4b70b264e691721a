#pragma once

#include <filesystem>
#include <vector>

#include "fundus/core/json_io.hpp"

namespace fundus::eval {

struct ScalingPoint {
  /// Data fraction.
  double n = 0.0;
  /// Accuracy at that fraction.
  double performance = 0.0;
};

/// L = c * N^alpha fitted by ordinary least squares on (ln N, ln L).
struct ScalingFit {
  double alpha = 0.0;
  double c = 0.0;
  /// Coefficient of determination of the log-log fit.
  double r2 = 0.0;
  /// 1 - (1 - r2)(n - 1)/(n - 2), one regressor.
  double adj_r2 = 0.0;
  /// Mean squared error of c * N^alpha against L, in linear space.
  double mse = 0.0;
  std::size_t points = 0;

  [[nodiscard]] double predict(double n) const;
  [[nodiscard]] json to_json() const;
};

/// Errors: DegenerateInput for fewer than three points, a non-positive N or
/// L, or N not strictly increasing.
ScalingFit fit_scaling_law(const std::vector<ScalingPoint>& points);

/// A JSON array, or JSONL, of {"n": .., "accuracy": ..} ("N"/"L" accepted).
std::vector<ScalingPoint> load_scaling_points(const std::filesystem::path& path);

}  // namespace fundus::eval
