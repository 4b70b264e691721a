#include "fundus/curator/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "fundus/core/error.hpp"
#include "fundus/core/rng.hpp"

namespace fundus::curator {

std::string to_string(Ablation ablation) {
  switch (ablation) {
    case Ablation::None: return "none";
    case Ablation::CognitiveDegradation: return "cognitive_degradation";
    case Ablation::RegionRemoval: return "region_removal";
    case Ablation::StartupRemoval: return "startup_removal";
  }
  return "?";
}

Ablation parse_ablation(std::string_view text) {
  for (auto a : {Ablation::None, Ablation::CognitiveDegradation, Ablation::RegionRemoval, Ablation::StartupRemoval}) {
    if (to_string(a) == text) return a;
  }
  fail(Errc::InvalidArgument, "unknown ablation '" + std::string(text) + "'");
}

void DatasetRecipe::validate() const {
  if (!counts.empty() && (total || !fractions.empty())) {
    fail(Errc::InvalidArgument, "recipe: give either counts or total (with optional fractions), not both");
  }
  if (counts.empty() && !total) fail(Errc::InvalidArgument, "recipe: counts or total required");
  if (!fractions.empty() && !total) fail(Errc::InvalidArgument, "recipe: fractions need a total");
  double sum = 0;
  for (const auto& [t, f] : fractions) {
    if (!(f >= 0) || !std::isfinite(f)) fail(Errc::InvalidArgument, "recipe: fraction for " + to_string(t) + " must be >= 0");
    sum += f;
  }
  if (!fractions.empty() && sum <= 0) fail(Errc::InvalidArgument, "recipe: fractions sum to zero");
}

json to_json(const DatasetRecipe& r) {
  json j = {{"seed", r.seed}, {"ablation", to_string(r.ablation)}, {"box_style", expansion::to_string(r.box_style)}};
  if (!r.counts.empty()) {
    json c = json::object();
    for (const auto& [t, n] : r.counts) c[to_string(t)] = n;
    j["counts"] = c;
  }
  if (r.total) j["total"] = *r.total;
  if (!r.fractions.empty()) {
    json f = json::object();
    for (const auto& [t, x] : r.fractions) f[to_string(t)] = x;
    j["fractions"] = f;
  }
  return j;
}

DatasetRecipe dataset_recipe_from_json(const json& j) {
  DatasetRecipe r;
  try {
    if (!j.contains("seed")) fail(Errc::MissingField, "recipe: seed is required");
    r.seed = j.at("seed").get<std::uint64_t>();
    r.ablation = parse_ablation(j.value("ablation", "none"));
    r.box_style = expansion::parse_box_style(j.value("box_style", "absolute"));
    if (j.contains("counts")) {
      for (const auto& [k, v] : j["counts"].items()) {
        if (!v.is_number_unsigned()) fail(Errc::InvalidArgument, "recipe: count for " + k + " must be >= 0");
        r.counts[parse_task_type(k)] = v.get<std::size_t>();
      }
    }
    if (j.contains("total")) r.total = j["total"].get<std::size_t>();
    if (j.contains("fractions")) {
      for (const auto& [k, v] : j["fractions"].items()) r.fractions[parse_task_type(k)] = v.get<double>();
    }
  } catch (const json::exception& e) {
    fail(Errc::ParseError, std::string("recipe: ") + e.what());
  }
  r.validate();
  return r;
}

DatasetRecipe load_recipe(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::IoError, "cannot open recipe " + path.string());
  try {
    return dataset_recipe_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    fail(Errc::ParseError, path.string() + ": " + e.what());
  }
}

std::map<TaskType, std::size_t> apportion(std::size_t total, const std::map<TaskType, double>& fractions) {
  double sum = 0;
  for (const auto& [t, f] : fractions) sum += f;
  std::map<TaskType, std::size_t> out;
  std::vector<std::pair<double, TaskType>> remainders;
  std::size_t assigned = 0;
  for (const auto& [t, f] : fractions) {
    const double exact = static_cast<double>(total) * f / sum;
    const auto base = static_cast<std::size_t>(std::floor(exact));
    out[t] = base;
    assigned += base;
    remainders.emplace_back(exact - static_cast<double>(base), t);
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total && i < remainders.size(); ++i, ++assigned) ++out[remainders[i].second];
  return out;
}

SamplePool build_pool(const std::vector<expansion::StoredImage>& images, const std::vector<expansion::GeneratedText>& accepted,
                      const DiseaseVocabulary& vocabulary, const RuleBank& rules, std::uint64_t seed) {
  SamplePool pool;
  const auto grouped = AcceptedTexts::group(accepted);
  const AcceptedTexts none;
  std::vector<const expansion::StoredImage*> ordered;
  for (const auto& im : images) ordered.push_back(&im);
  std::sort(ordered.begin(), ordered.end(),
            [](const auto* a, const auto* b) { return a->annotation.image_id < b->annotation.image_id; });

  for (const auto* im : ordered) {
    const auto& a = im->annotation;
    if (im->split == Split::HeldOut) {
      ++pool.held_out_images;
      continue;
    }
    const auto git = grouped.find(a.image_id);
    const AcceptedTexts& texts = git == grouped.end() ? none : git->second;
    const BuildContext ctx{vocabulary, rules, im->image_path ? im->image_path->string() : a.image_id};
    for (TaskType type : kAllTaskTypes) {
      // Each (image, task) draws from its own stream, so pools are stable
      // under reordering and under adding builders.
      SeededRng rng(fnv1a64(to_string(type), fnv1a64(a.image_id, seed)));
      try {
        InstructionSample s;
        switch (type) {
          case TaskType::GeneralReport: s = make_general_report(a, texts, ctx, rng); break;
          case TaskType::RegionalQa: s = make_regional_qa(a, ctx, rng); break;
          case TaskType::GroundingReport: s = make_grounding_report(a, texts, ctx, rng); break;
          case TaskType::MultiturnDiagnostic: s = make_cognitive_chain_diagnostic(a, texts, ctx, rng); break;
          case TaskType::MultiturnConfirmation: s = make_cognitive_chain_confirmation(a, texts, ctx, rng); break;
        }
        s.check();
        if (is_multiturn(type) && !chain_intact(s)) {
          ++pool.skipped[to_string(type) + ": turns not linked by provenance"];
          continue;
        }
        pool.samples.push_back(std::move(s));
      } catch (const Error& e) {
        if (e.code() != Errc::MissingAcceptedText && e.code() != Errc::NoBoxes) throw;
        ++pool.skipped[to_string(type) + ": " + std::string(fundus::to_string(e.code()))];
      }
    }
  }
  return pool;
}

std::vector<InstructionSample> apply_ablation(std::vector<InstructionSample> samples, Ablation ablation) {
  std::vector<InstructionSample> out;
  for (auto& s : samples) {
    switch (ablation) {
      case Ablation::None: out.push_back(std::move(s)); break;
      case Ablation::CognitiveDegradation:
        if (is_multiturn(s.task_type) && !s.split_from) {
          for (auto& piece : degrade_cognitive_chain(s)) out.push_back(std::move(piece));
        } else {
          out.push_back(std::move(s));
        }
        break;
      case Ablation::RegionRemoval:
        if (!contains_box_token(s)) out.push_back(std::move(s));
        break;
      case Ablation::StartupRemoval:
        if (s.task_type != TaskType::GeneralReport) out.push_back(std::move(s));
        break;
    }
  }
  return out;
}

json Composition::to_json(const DatasetRecipe& recipe) const {
  json avail = json::object();
  json sel = json::object();
  for (TaskType t : kAllTaskTypes) {
    avail[curator::to_string(t)] = available.count(t) ? available.at(t) : 0;
    sel[curator::to_string(t)] = selected.count(t) ? selected.at(t) : 0;
  }
  return {{"recipe", curator::to_json(recipe)},
          {"available", avail},
          {"selected", sel},
          {"total", total},
          {"samples_with_box_tokens", box_token_samples},
          {"degraded_pieces", split_pieces},
          {"skipped", skipped},
          {"held_out_images_excluded", held_out_images}};
}

Dataset sample_dataset(const std::vector<InstructionSample>& pool, const DatasetRecipe& recipe) {
  recipe.validate();
  std::map<TaskType, std::vector<const InstructionSample*>> by_type;
  std::vector<const InstructionSample*> all;
  for (const auto& s : pool) {
    by_type[s.task_type].push_back(&s);
    all.push_back(&s);
  }
  const auto by_id = [](const auto* a, const auto* b) { return a->id < b->id; };
  for (auto& [t, list] : by_type) std::sort(list.begin(), list.end(), by_id);
  std::sort(all.begin(), all.end(), by_id);

  Dataset out;
  for (const auto& [t, list] : by_type) out.composition.available[t] = list.size();

  std::vector<const InstructionSample*> chosen;
  if (!recipe.counts.empty() || !recipe.fractions.empty()) {
    const auto counts = recipe.counts.empty() ? apportion(*recipe.total, recipe.fractions) : recipe.counts;
    for (const auto& [t, n] : counts) {
      auto list = by_type[t];
      if (n > list.size()) {
        fail(Errc::InsufficientSamples, to_string(t) + ": requested " + std::to_string(n) + ", only " +
                                            std::to_string(list.size()) + " available");
      }
      SeededRng rng(fnv1a64(to_string(t), recipe.seed));
      rng.shuffle(list);
      chosen.insert(chosen.end(), list.begin(), list.begin() + static_cast<std::ptrdiff_t>(n));
    }
  } else {
    if (*recipe.total > all.size()) {
      fail(Errc::InsufficientSamples, "all task types: requested " + std::to_string(*recipe.total) + ", only " +
                                          std::to_string(all.size()) + " available");
    }
    SeededRng rng(fnv1a64("uniform", recipe.seed));
    rng.shuffle(all);
    chosen.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(*recipe.total));
  }

  std::sort(chosen.begin(), chosen.end(), by_id);
  SeededRng order(fnv1a64("order", recipe.seed));
  order.shuffle(chosen);
  for (const auto* s : chosen) {
    out.samples.push_back(*s);
    ++out.composition.selected[s->task_type];
    if (contains_box_token(*s)) ++out.composition.box_token_samples;
    if (s->split_from) ++out.composition.split_pieces;
  }
  out.composition.total = out.samples.size();
  return out;
}

Dataset build_dataset(const DatasetRecipe& recipe, const expansion::ReviewStore& store, const DiseaseVocabulary& vocabulary,
                      const RuleBank& rules) {
  recipe.validate();
  std::vector<expansion::StoredImage> images;
  std::map<std::string, ImageSize> sizes;
  for (const auto& id : store.image_ids()) {
    images.push_back(*store.image(id));
    sizes[id] = images.back().annotation.image_size;
  }
  auto pool = build_pool(images, store.accepted_texts(), vocabulary, rules, recipe.seed);
  auto dataset = sample_dataset(apply_ablation(std::move(pool.samples), recipe.ablation), recipe);
  dataset.composition.skipped = pool.skipped;
  dataset.composition.held_out_images = pool.held_out_images;
  if (recipe.box_style != expansion::BoxStyle::Absolute) {
    for (auto& s : dataset.samples) {
      for (auto& t : s.turns) t.text = expansion::restyle_box_tokens(t.text, sizes.at(s.image_id), recipe.box_style);
    }
  }
  return dataset;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<InstructionSample>& samples) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::IoError, "cannot write " + path.string());
  for (const auto& s : samples) out << to_json(s).dump() << '\n';
  if (!out) fail(Errc::IoError, "write failed: " + path.string());
}

std::vector<InstructionSample> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::IoError, "cannot open " + path.string());
  std::vector<InstructionSample> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(instruction_sample_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      fail(Errc::ParseError, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace fundus::curator
