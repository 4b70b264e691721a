#include "fundus/selftrain/ood_report.hpp"

#include <iomanip>
#include <sstream>

#include "fundus/core/error.hpp"

namespace fundus::selftrain {

std::string regime_name(int round) {
  if (round == 0) return "True Labels";
  if (round == 1) return "Pseudo Labels (round 1)";
  return "Iterative Pseudo Labels (round " + std::to_string(round) + ")";
}

json OodReport::to_json() const {
  json rows = json::array();
  for (Category c : kAllCategories) {
    json row = {{"category", std::string(code(c))}, {"name", std::string(display_name(c))}};
    json values = json::array();
    const auto it = cells.find(c);
    for (std::size_t r = 0; r < regimes.size(); ++r) {
      std::optional<SegMetrics> m;
      if (it != cells.end() && r < it->second.size()) m = it->second[r];
      if (m) {
        values.push_back({{"regime", regimes[r]}, {"dice", m->dice}, {"iou_pixel", m->iou_pixel}, {"cases", m->cases}});
      } else {
        values.push_back({{"regime", regimes[r]}, {"dice", nullptr}, {"iou_pixel", nullptr}, {"cases", 0}});
      }
    }
    row["regimes"] = values;
    rows.push_back(row);
  }
  return {{"regimes", regimes}, {"rows", rows}};
}

std::string OodReport::to_csv() const {
  std::ostringstream out;
  out << "category";
  for (const auto& r : regimes) out << ",\"" << r << " Dice\",\"" << r << " IoU_pixel\"";
  out << '\n';
  out << std::setprecision(6);
  for (Category c : kAllCategories) {
    out << code(c);
    const auto it = cells.find(c);
    for (std::size_t r = 0; r < regimes.size(); ++r) {
      std::optional<SegMetrics> m;
      if (it != cells.end() && r < it->second.size()) m = it->second[r];
      if (m) out << ',' << m->dice << ',' << m->iou_pixel;
      else out << ",,";
    }
    out << '\n';
  }
  return out.str();
}

std::string OodReport::to_table() const {
  std::ostringstream out;
  out << std::left << std::setw(20) << "Category";
  for (const auto& r : regimes) out << " | " << std::setw(34) << r;
  out << '\n' << std::setw(20) << "";
  for (std::size_t r = 0; r < regimes.size(); ++r) out << " | " << std::setw(16) << "Dice" << ' ' << std::setw(17) << "IoU_pixel";
  out << '\n';
  for (Category c : kAllCategories) {
    out << std::setw(20) << display_name(c);
    const auto it = cells.find(c);
    for (std::size_t r = 0; r < regimes.size(); ++r) {
      std::optional<SegMetrics> m;
      if (it != cells.end() && r < it->second.size()) m = it->second[r];
      auto pct = [](double v) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(1) << v * 100.0 << '%';
        return s.str();
      };
      out << " | " << std::setw(16) << (m ? pct(m->dice) : "n/a") << ' ' << std::setw(17)
          << (m ? pct(m->iou_pixel) : "n/a");
    }
    out << '\n';
  }
  return out.str();
}

OodReport evaluate_ood(const std::vector<RoundState>& states, const TestSet& test,
                       const ImageCatalog& catalog, SegmenterAdapter& adapter,
                       const std::filesystem::path& workdir) {
  OodReport report;
  for (Category c : kAllCategories) report.cells[c] = {};
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto& state = states[i];
    state.check();
    if (state.labeled.empty()) fail(Errc::EmptyTrainingSet, "regime " + regime_name(state.round) + " has no labels");
    report.regimes.push_back(regime_name(state.round));
    std::vector<LabeledExample> examples;
    for (const auto& m : state.labeled) {
      auto it = catalog.find(m.image_id);
      if (it == catalog.end()) fail(Errc::InvalidArgument, "labeled mask for unknown image " + m.image_id);
      examples.push_back({it->second, m});
    }
    const auto dir = workdir / ("regime_" + std::to_string(i));
    const auto model = adapter.train(examples, dir / "train");
    const auto predictions = adapter.predict(model, test.images, dir / "predict");
    const auto scores = score_predictions(predictions, test);
    for (Category c : kAllCategories) {
      auto it = scores.find(c);
      report.cells[c].push_back(it == scores.end() ? std::nullopt : std::optional<SegMetrics>(it->second));
    }
  }
  return report;
}

}  // namespace fundus::selftrain
