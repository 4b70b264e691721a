#include "fundus/eval/scaling.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "fundus/core/error.hpp"

namespace fundus::eval {

double ScalingFit::predict(double n) const { return c * std::pow(n, alpha); }

json ScalingFit::to_json() const {
  return {{"alpha", alpha}, {"c", c}, {"r2", r2}, {"adj_r2", adj_r2}, {"mse", mse}, {"points", points}};
}

ScalingFit fit_scaling_law(const std::vector<ScalingPoint>& points) {
  const std::size_t n = points.size();
  if (n < 3) fail(Errc::DegenerateInput, "need at least 3 points, got " + std::to_string(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = points[i];
    if (!(p.n > 0) || !(p.performance > 0) || !std::isfinite(p.n) || !std::isfinite(p.performance))
      fail(Errc::DegenerateInput, "point " + std::to_string(i) + " is not strictly positive");
    if (i > 0 && !(p.n > points[i - 1].n))
      fail(Errc::DegenerateInput, "N must be strictly increasing (point " + std::to_string(i) + ")");
  }

  std::vector<double> x(n), y(n);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = std::log(points[i].n);
    y[i] = std::log(points[i].performance);
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }

  ScalingFit fit;
  fit.points = n;
  fit.alpha = sxy / sxx;
  const double intercept = my - fit.alpha * mx;
  fit.c = std::exp(intercept);

  double sse = 0, mse = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - (intercept + fit.alpha * x[i]);
    sse += r * r;
    const double d = points[i].performance - fit.predict(points[i].n);
    mse += d * d;
  }
  // A flat series is fitted exactly by a zero slope.
  fit.r2 = syy > 0 ? 1.0 - sse / syy : 1.0;
  fit.adj_r2 = 1.0 - (1.0 - fit.r2) * static_cast<double>(n - 1) / static_cast<double>(n - 2);
  fit.mse = mse / static_cast<double>(n);
  return fit;
}

namespace {

ScalingPoint point_from_json(const json& j) {
  auto pick = [&](const char* a, const char* b) {
    if (j.contains(a)) return j.at(a).get<double>();
    return j.at(b).get<double>();
  };
  return {pick("n", "N"), j.contains("accuracy") ? j.at("accuracy").get<double>() : pick("L", "performance")};
}

}  // namespace

std::vector<ScalingPoint> load_scaling_points(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::IoError, "cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  std::vector<ScalingPoint> points;
  try {
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '[') {
      for (const auto& j : json::parse(text)) points.push_back(point_from_json(j));
    } else {
      std::istringstream lines(text);
      std::string line;
      while (std::getline(lines, line))
        if (line.find_first_not_of(" \t\r") != std::string::npos) points.push_back(point_from_json(json::parse(line)));
    }
  } catch (const json::exception& e) {
    fail(Errc::ParseError, path.string() + ": " + e.what());
  }
  return points;
}

}  // namespace fundus::eval
