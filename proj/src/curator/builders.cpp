#include "fundus/curator/builders.hpp"

#include <algorithm>

#include "fundus/core/category.hpp"
#include "fundus/core/error.hpp"
#include "fundus/expansion/box_tokens.hpp"

namespace fundus::curator {

using expansion::GeneratedText;
using expansion::TextPurpose;

namespace {

void add_unique(std::vector<std::string>& out, const std::string& v) {
  if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
}

std::string join_natural(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += i + 1 == parts.size() ? " and " : ", ";
    out += parts[i];
  }
  return out;
}

/// Region codes cited by box or, failing that, named in the text.
std::vector<std::string> region_features(const GeneratedText& t) {
  std::vector<std::string> out;
  for (const auto& b : t.box_refs) add_unique(out, std::string(code(b.category)));
  if (out.empty()) {
    const auto lower = to_lower(t.text);
    for (Category c : kAllCategories) {
      if (lower.find(display_name(c)) != std::string::npos) add_unique(out, std::string(code(c)));
    }
  }
  return out;
}

std::vector<BoxRect> rects(const GeneratedText& t) {
  std::vector<BoxRect> out;
  for (const auto& b : t.box_refs) out.push_back(b.rect);
  return out;
}

const GeneratedText& require(const AcceptedTexts& texts, TextPurpose purpose, const std::string& image_id) {
  const auto* t = texts.first(purpose);
  if (!t) fail(Errc::MissingAcceptedText, image_id + " has no accepted " + to_string(purpose) + " text");
  return *t;
}

InstructionSample single_turn(const StructuredAnnotation& a, const BuildContext& ctx, TaskType type,
                              const Rule& prompt, const GeneratedText& answer) {
  InstructionSample s;
  s.id = a.image_id + ":" + to_string(type);
  s.image_id = a.image_id;
  s.image = ctx.image.empty() ? a.image_id : ctx.image;
  s.task_type = type;
  s.turns = {{Role::User, prompt.text}, {Role::Assistant, answer.text}};
  PairProvenance p;
  p.prompt_rule = prompt.id;
  p.source = "accepted_text";
  p.text_ids = {answer.id};
  p.features = region_features(answer);
  p.boxes = rects(answer);
  s.provenance = {std::move(p)};
  return s;
}

std::string verbalized(const StructuredAnnotation& a, const std::string& disease, const DiseaseVocabulary& vocabulary) {
  const auto g = a.grading_labels.find(disease);
  return vocabulary.verbalize(disease, g == a.grading_labels.end() ? std::nullopt : std::optional<int>(g->second));
}

}  // namespace

std::map<std::string, AcceptedTexts> AcceptedTexts::group(const std::vector<GeneratedText>& texts) {
  std::map<std::string, AcceptedTexts> out;
  for (const auto& t : texts) {
    if (t.status != expansion::TextStatus::Accepted) continue;
    out[t.image_id].by_purpose[t.purpose].push_back(t);
  }
  for (auto& [id, g] : out) {
    for (auto& [p, list] : g.by_purpose) {
      std::sort(list.begin(), list.end(), [](const auto& x, const auto& y) { return x.id < y.id; });
    }
  }
  return out;
}

const GeneratedText* AcceptedTexts::first(TextPurpose purpose) const {
  const auto it = by_purpose.find(purpose);
  if (it == by_purpose.end() || it->second.empty()) return nullptr;
  return &it->second.front();
}

InstructionSample make_general_report(const StructuredAnnotation& a, const AcceptedTexts& texts,
                                      const BuildContext& ctx, SeededRng& rng) {
  const auto& answer = require(texts, TextPurpose::GeneralReport, a.image_id);
  return single_turn(a, ctx, TaskType::GeneralReport, ctx.rules.pick("general_report.prompt", rng), answer);
}

InstructionSample make_grounding_report(const StructuredAnnotation& a, const AcceptedTexts& texts,
                                        const BuildContext& ctx, SeededRng& rng) {
  const auto& answer = require(texts, TextPurpose::GroundingReport, a.image_id);
  return single_turn(a, ctx, TaskType::GroundingReport, ctx.rules.pick("grounding_report.prompt", rng), answer);
}

InstructionSample make_regional_qa(const StructuredAnnotation& a, const BuildContext& ctx, SeededRng& rng) {
  std::vector<Category> present;
  for (Category c : kAllCategories) {
    if (!a.boxes_of(c).empty()) present.push_back(c);
  }
  if (present.empty()) fail(Errc::NoBoxes, a.image_id + " has no boxes for a regional question");
  const Category c = present[rng.below(present.size())];
  const auto boxes = a.boxes_of(c);

  const auto& prompt = ctx.rules.pick("regional_qa.prompt", rng);
  const auto& answer = ctx.rules.pick(boxes.size() == 1 ? "regional_qa.answer_one" : "regional_qa.answer_many", rng);
  std::vector<std::string> tokens;
  PairProvenance p;
  for (const auto& b : boxes) {
    tokens.push_back(expansion::box_token(b.rect));
    p.boxes.push_back(b.rect);
  }
  const std::map<std::string, std::string> values = {{"category", std::string(display_name(c))},
                                                     {"boxes", join_natural(tokens)},
                                                     {"count", std::to_string(boxes.size())}};
  InstructionSample s;
  s.id = a.image_id + ":" + to_string(TaskType::RegionalQa);
  s.image_id = a.image_id;
  s.image = ctx.image.empty() ? a.image_id : ctx.image;
  s.task_type = TaskType::RegionalQa;
  s.turns = {{Role::User, fill(prompt.text, values)}, {Role::Assistant, fill(answer.text, values)}};
  p.prompt_rule = prompt.id;
  p.source = "rule";
  p.answer_rule = answer.id;
  p.features = {std::string(code(c))};
  s.provenance = {std::move(p)};
  return s;
}

InstructionSample make_cognitive_chain_diagnostic(const StructuredAnnotation& a, const AcceptedTexts& texts,
                                                  const BuildContext& ctx, SeededRng& rng) {
  const auto& regions = require(texts, TextPurpose::RegionAnalysis, a.image_id);
  const auto& diagnosis = require(texts, TextPurpose::Diagnosis, a.image_id);

  const auto& ask1 = ctx.rules.pick("diagnostic.turn1", rng);
  const auto& ask2 = ctx.rules.pick("diagnostic.turn2", rng);

  PairProvenance first;
  first.prompt_rule = ask1.id;
  first.source = "accepted_text";
  first.text_ids = {regions.id};
  first.features = region_features(regions);
  first.boxes = rects(regions);

  std::vector<std::string> region_names;
  for (const auto& f : first.features) region_names.push_back(std::string(display_name(*parse_category(f))));
  const std::string features = region_names.empty() ? "findings" : join_natural(region_names);

  std::vector<std::string> diseases;
  for (const auto& d : a.disease_labels) diseases.push_back(verbalized(a, d, ctx.vocabulary));
  const auto& conclusion = ctx.rules.pick(diseases.empty() ? "diagnostic.normal" : "diagnostic.conclusion", rng);

  PairProvenance second;
  second.prompt_rule = ask2.id;
  second.source = "composed";
  second.text_ids = {diagnosis.id};
  second.answer_rule = conclusion.id;
  second.features = first.features;  // restated by name in the conclusion
  for (const auto& f : region_features(diagnosis)) add_unique(second.features, f);
  for (const auto& d : a.disease_labels) add_unique(second.features, ctx.vocabulary.canonicalize(d));
  second.boxes = rects(diagnosis);
  second.builds_on = 0;

  InstructionSample s;
  s.id = a.image_id + ":" + to_string(TaskType::MultiturnDiagnostic);
  s.image_id = a.image_id;
  s.image = ctx.image.empty() ? a.image_id : ctx.image;
  s.task_type = TaskType::MultiturnDiagnostic;
  s.turns = {{Role::User, ask1.text},
             {Role::Assistant, regions.text},
             {Role::User, ask2.text},
             {Role::Assistant, diagnosis.text + " " +
                                   fill(conclusion.text, {{"features", features}, {"diagnosis", join_natural(diseases)}})}};
  s.provenance = {std::move(first), std::move(second)};
  return s;
}

InstructionSample make_cognitive_chain_confirmation(const StructuredAnnotation& a, const AcceptedTexts& texts,
                                                    const BuildContext& ctx, SeededRng& rng) {
  const auto& overview = require(texts, TextPurpose::Overview, a.image_id);
  const auto mentioned = ctx.vocabulary.mentions(overview.text);
  std::vector<std::string> labels;
  for (const auto& d : a.disease_labels) labels.push_back(ctx.vocabulary.canonicalize(d));

  std::optional<std::string> target;
  for (const auto& m : mentioned) {
    if (std::find(labels.begin(), labels.end(), m) != labels.end()) {
      target = m;
      break;
    }
  }
  if (!target && !mentioned.empty()) target = mentioned.front();
  if (!target && !labels.empty()) target = labels.front();
  if (!target) fail(Errc::MissingAcceptedText, a.image_id + ": the overview names no disease to verify");

  const GeneratedText* verification = nullptr;
  const auto it = texts.by_purpose.find(TextPurpose::FeatureVerification);
  if (it != texts.by_purpose.end()) {
    for (const auto& t : it->second) {
      if (!t.target || to_lower(*t.target).find(*target) != std::string::npos) {
        verification = &t;
        break;
      }
    }
  }
  if (!verification) {
    fail(Errc::MissingAcceptedText, a.image_id + " has no accepted feature_verification text for " + *target);
  }

  const auto& ask1 = ctx.rules.pick("confirmation.turn1", rng);
  const auto& ask2 = ctx.rules.pick("confirmation.turn2", rng);

  PairProvenance first;
  first.prompt_rule = ask1.id;
  first.source = "accepted_text";
  first.text_ids = {overview.id};
  first.features = mentioned;
  for (const auto& f : region_features(overview)) add_unique(first.features, f);
  first.boxes = rects(overview);

  PairProvenance second;
  second.prompt_rule = ask2.id;
  second.source = "accepted_text";
  second.text_ids = {verification->id};
  second.features = {*target};
  for (const auto& f : region_features(*verification)) add_unique(second.features, f);
  second.boxes = rects(*verification);
  second.builds_on = 0;

  InstructionSample s;
  s.id = a.image_id + ":" + to_string(TaskType::MultiturnConfirmation);
  s.image_id = a.image_id;
  s.image = ctx.image.empty() ? a.image_id : ctx.image;
  s.task_type = TaskType::MultiturnConfirmation;
  s.turns = {{Role::User, ask1.text},
             {Role::Assistant, overview.text},
             {Role::User, fill(ask2.text, {{"target", *target}})},
             {Role::Assistant, verification->text}};
  s.provenance = {std::move(first), std::move(second)};
  return s;
}

std::vector<InstructionSample> degrade_cognitive_chain(const InstructionSample& sample) {
  if (!is_multiturn(sample.task_type) || sample.split_from || sample.pair_count() < 2) {
    fail(Errc::NotMultiturn, sample.id + " is not a multiturn sample");
  }
  std::vector<InstructionSample> out;
  for (std::size_t k = 0; k < sample.pair_count(); ++k) {
    InstructionSample piece;
    piece.id = sample.id + "#" + std::to_string(k + 1);
    piece.image_id = sample.image_id;
    piece.image = sample.image;
    piece.task_type = sample.task_type;
    piece.turns = {sample.turns[2 * k], sample.turns[2 * k + 1]};
    piece.provenance = {sample.provenance[k]};
    piece.provenance[0].builds_on.reset();
    piece.split_from = sample.id;
    out.push_back(std::move(piece));
  }
  return out;
}

}  // namespace fundus::curator
