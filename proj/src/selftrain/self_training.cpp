#include "fundus/selftrain/self_training.hpp"

#include <algorithm>
#include <mutex>
#include <set>

#include "fundus/core/error.hpp"
#include "fundus/core/manifest.hpp"
#include "fundus/core/parallel.hpp"
#include "fundus/selftrain/metrics.hpp"

namespace fundus::selftrain {

ImageCatalog make_catalog(const std::vector<ImageRecord>& records) {
  ImageCatalog catalog;
  for (const auto& r : records) catalog.emplace(r.id, r);
  return catalog;
}

void RoundState::check() const {
  if (round < 0) fail(Errc::InvalidArgument, "round must be >= 0");
  for (const auto& m : labeled) {
    if (m.label_kind == LabelKind::TrueLabel) continue;
    if (m.round < 1 || m.round > round) {
      fail(Errc::InvalidArgument, "pseudo label for " + m.image_id + " from round " +
                                      std::to_string(m.round) + " in round " + std::to_string(round) +
                                      " state");
    }
  }
}

RoundState initial_state(std::vector<SegMask> true_labels) {
  for (const auto& m : true_labels) {
    if (m.label_kind != LabelKind::TrueLabel) fail(Errc::InvalidArgument, "round 0 holds true labels only");
  }
  RoundState s;
  s.labeled = std::move(true_labels);
  return s;
}

namespace {

std::vector<LabeledExample> training_examples(const RoundState& state, const ImageCatalog& catalog) {
  std::vector<LabeledExample> out;
  out.reserve(state.labeled.size());
  for (const auto& m : state.labeled) {
    auto it = catalog.find(m.image_id);
    if (it == catalog.end()) fail(Errc::InvalidArgument, "labeled mask for unknown image " + m.image_id);
    out.push_back({it->second, m});
  }
  return out;
}

std::vector<PredictedMask> predict_batched(SegmenterAdapter& adapter, const ModelHandle& model,
                                           const std::vector<ImageRecord>& images,
                                           const std::filesystem::path& dir, const RoundOptions& options) {
  const std::size_t batch = std::max<std::size_t>(1, options.predict_batch);
  const std::size_t n_batches = (images.size() + batch - 1) / batch;
  std::vector<std::vector<PredictedMask>> results(n_batches);
  bounded_parallel_for(n_batches, options.max_in_flight, [&](std::size_t b) {
    const auto first = images.begin() + static_cast<std::ptrdiff_t>(b * batch);
    const auto last = images.begin() + static_cast<std::ptrdiff_t>(std::min(images.size(), (b + 1) * batch));
    results[b] = adapter.predict(model, std::vector<ImageRecord>(first, last),
                                 dir / ("batch_" + std::to_string(b)));
  });
  std::vector<PredictedMask> all;
  for (auto& r : results) all.insert(all.end(), r.begin(), r.end());
  return all;
}

}  // namespace

std::map<Category, SegMetrics> score_predictions(const std::vector<PredictedMask>& predictions,
                                                 const TestSet& test) {
  std::map<std::pair<std::string, Category>, std::filesystem::path> predicted;
  for (const auto& p : predictions) predicted[{p.image_id, p.category}] = p.mask_path;
  const auto catalog = make_catalog(test.images);

  std::map<Category, SegMetrics> sums;
  for (const auto& truth : test.truth) {
    auto rec = catalog.find(truth.image_id);
    if (rec == catalog.end()) fail(Errc::InvalidArgument, "truth mask for unknown test image " + truth.image_id);
    const auto t = validate_mask(rec->second, truth).raster;
    MaskRaster p(t.width(), t.height());
    if (auto it = predicted.find({truth.image_id, truth.category}); it != predicted.end()) {
      p = read_mask_png(it->second);
    }
    const auto counts = overlap_counts(p, t);
    auto& s = sums[truth.category];
    s.dice += dice(counts);
    s.iou_pixel += iou_pixel(counts);
    ++s.cases;
  }
  for (auto& [c, s] : sums) {
    s.dice /= static_cast<double>(s.cases);
    s.iou_pixel /= static_cast<double>(s.cases);
  }
  return sums;
}

RoundState run_round(const RoundState& state, const std::vector<ImageRecord>& unlabeled,
                     const ImageCatalog& catalog, SegmenterAdapter& adapter,
                     const RoundOptions& options) {
  state.check();
  if (state.labeled.empty()) fail(Errc::EmptyTrainingSet, "no labeled masks to train on");

  RoundState next;
  next.round = state.round + 1;
  next.labeled = state.labeled;
  next.metrics_per_category = state.metrics_per_category;
  if (unlabeled.empty()) return next;

  const auto dir = options.workdir / ("round_" + std::to_string(next.round));
  std::filesystem::create_directories(dir);
  const ModelHandle model = adapter.train(training_examples(state, catalog), dir / "train");

  std::set<std::pair<std::string, Category>> has_truth;
  for (const auto& m : state.labeled) {
    if (m.label_kind == LabelKind::TrueLabel) has_truth.insert({m.image_id, m.category});
  }
  std::map<std::string, const ImageRecord*> wanted;
  for (const auto& r : unlabeled) wanted[r.id] = &r;

  const auto predictions = predict_batched(adapter, model, unlabeled, dir / "predict", options);
  std::map<std::string, std::vector<SegMask>> per_image;
  for (const auto& p : predictions) {
    auto it = wanted.find(p.image_id);
    if (it == wanted.end()) fail(Errc::AdapterFailure, "prediction for unrequested image " + p.image_id);
    if (has_truth.count({p.image_id, p.category})) continue;
    ValidatedMask v;
    try {
      v = validate_mask(*it->second, SegMask::pseudo_label(p.image_id, p.category, p.mask_path, next.round));
    } catch (const Error& e) {
      fail(Errc::AdapterFailure, std::string("unusable prediction: ") + e.what());
    }
    if (*v.mask.foreground_count < options.policy.min_foreground) continue;
    per_image[p.image_id].push_back(std::move(v.mask));
  }

  for (auto& [id, masks] : per_image) {
    std::stable_sort(masks.begin(), masks.end(), [](const SegMask& a, const SegMask& b) {
      if (*a.foreground_count != *b.foreground_count) return *a.foreground_count > *b.foreground_count;
      return a.category < b.category;
    });
    if (options.policy.max_per_image > 0 && masks.size() > options.policy.max_per_image) {
      masks.resize(options.policy.max_per_image);
    }
    std::sort(masks.begin(), masks.end(),
              [](const SegMask& a, const SegMask& b) { return a.category < b.category; });
    next.labeled.insert(next.labeled.end(), masks.begin(), masks.end());
  }

  if (options.evaluation) {
    const auto eval_predictions =
        predict_batched(adapter, model, options.evaluation->images, dir / "evaluate", options);
    next.metrics_per_category = score_predictions(eval_predictions, *options.evaluation);
  }
  next.check();
  return next;
}

std::vector<RoundState> self_train(const RoundState& initial, const std::vector<ImageRecord>& unlabeled,
                                   const ImageCatalog& catalog, SegmenterAdapter& adapter, int rounds,
                                   const RoundOptions& options) {
  if (rounds < 0) fail(Errc::InvalidArgument, "rounds must be >= 0");
  std::vector<RoundState> states{initial};
  for (int r = 0; r < rounds; ++r) {
    states.push_back(run_round(states.back(), unlabeled, catalog, adapter, options));
  }
  return states;
}

std::map<Category, LabelCounts> label_counts(const RoundState& state) {
  std::map<Category, LabelCounts> out;
  for (Category c : kAllCategories) out[c] = {};
  for (const auto& m : state.labeled) {
    auto& c = out[m.category];
    if (m.label_kind == LabelKind::TrueLabel) ++c.true_labels;
    else ++c.pseudo_labels;
  }
  return out;
}

json label_ledger(const std::vector<RoundState>& states) {
  json ledger = json::array();
  for (const auto& s : states) {
    json counts = json::object();
    for (const auto& [c, n] : label_counts(s)) {
      counts[std::string(code(c))] = {{"true", n.true_labels}, {"pseudo", n.pseudo_labels}};
    }
    ledger.push_back({{"round", s.round}, {"counts", counts}});
  }
  return ledger;
}

json to_json(const RoundState& state) {
  json labeled = json::array();
  for (const auto& m : state.labeled) labeled.push_back(fundus::to_json(m));
  json metrics = json::object();
  for (const auto& [c, m] : state.metrics_per_category) {
    metrics[std::string(code(c))] = {{"dice", m.dice}, {"iou_pixel", m.iou_pixel}, {"cases", m.cases}};
  }
  return {{"round", state.round}, {"labeled", labeled}, {"metrics", metrics}};
}

RoundState round_state_from_json(const json& j) {
  RoundState s;
  s.round = j.at("round").get<int>();
  for (const auto& m : j.at("labeled")) s.labeled.push_back(seg_mask_from_json(m));
  for (const auto& [k, v] : j.value("metrics", json::object()).items()) {
    auto c = parse_category(k);
    if (!c) fail(Errc::ParseError, "unknown category " + k);
    s.metrics_per_category[*c] = {v.at("dice").get<double>(), v.at("iou_pixel").get<double>(),
                                  v.at("cases").get<std::size_t>()};
  }
  s.check();
  return s;
}

}  // namespace fundus::selftrain
