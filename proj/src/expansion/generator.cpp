#include "fundus/expansion/generator.hpp"

#include <algorithm>

#include "fundus/core/error.hpp"
#include "fundus/core/rng.hpp"
#include "fundus/expansion/box_tokens.hpp"

namespace fundus::expansion {

std::string to_string(TextStatus status) {
  switch (status) {
    case TextStatus::PendingReview: return "pending_review";
    case TextStatus::Accepted: return "accepted";
    case TextStatus::Discarded: return "discarded";
    case TextStatus::RegenerateRequested: return "regenerate_requested";
  }
  return "?";
}

TextStatus parse_text_status(std::string_view text) {
  for (auto s : {TextStatus::PendingReview, TextStatus::Accepted, TextStatus::Discarded, TextStatus::RegenerateRequested}) {
    if (to_string(s) == text) return s;
  }
  fail(Errc::InvalidArgument, "unknown text status '" + std::string(text) + "'");
}

json to_json(const GeneratedText& t) {
  json refs = json::array();
  for (const auto& b : t.box_refs) refs.push_back(to_json(b));
  json j = {{"id", t.id},
            {"image_id", t.image_id},
            {"template_id", t.template_id},
            {"purpose", to_string(t.purpose)},
            {"text", t.text},
            {"box_refs", refs},
            {"generator_tag", t.generator_tag},
            {"status", to_string(t.status)},
            {"attempt", t.attempt},
            {"seed", t.seed},
            {"retry_count", t.retry_count}};
  j["parent_id"] = t.parent_id ? json(*t.parent_id) : json(nullptr);
  j["target"] = t.target ? json(*t.target) : json(nullptr);
  return j;
}

GeneratedText generated_text_from_json(const json& j, ImageSize size) {
  try {
    GeneratedText t;
    t.id = j.value("id", std::int64_t{0});
    t.image_id = j.at("image_id").get<std::string>();
    t.template_id = j.at("template_id").get<std::string>();
    t.purpose = parse_purpose(j.at("purpose").get<std::string>());
    t.text = j.at("text").get<std::string>();
    for (const auto& b : j.value("box_refs", json::array())) t.box_refs.push_back(bounding_box_from_json(b, size));
    t.generator_tag = j.value("generator_tag", "");
    t.status = parse_text_status(j.value("status", "pending_review"));
    t.attempt = j.value("attempt", 1);
    t.seed = j.value("seed", std::uint64_t{0});
    t.retry_count = j.value("retry_count", 0);
    if (j.contains("parent_id") && !j["parent_id"].is_null()) t.parent_id = j["parent_id"].get<std::int64_t>();
    if (j.contains("target") && !j["target"].is_null()) t.target = j["target"].get<std::string>();
    return t;
  } catch (const json::exception& e) {
    fail(Errc::ParseError, std::string("generated text: ") + e.what());
  }
}

std::vector<std::string> GenerateOptions::default_refusal_phrases() {
  return {"i'm sorry", "i am sorry", "i cannot", "i can't", "i can not", "i'm unable", "i am unable",
          "unable to assist", "as an ai"};
}

std::uint64_t completion_seed(std::uint64_t base_seed, const std::string& image_id, const std::string& template_id,
                              int attempt, int k, int retries) {
  const auto root = fnv1a64(template_id, fnv1a64(image_id, fnv1a64(std::to_string(base_seed))));
  // Attempts occupy consecutive, non-overlapping windows of retries + 1 seeds.
  return root + static_cast<std::uint64_t>(attempt - 1) * static_cast<std::uint64_t>(retries + 1) +
         static_cast<std::uint64_t>(k);
}

std::vector<BoundingBox> resolve_box_refs(const std::string& text, const StructuredAnnotation& annotation) {
  std::vector<BoundingBox> refs;
  for (const auto& m : find_box_tokens(text)) {
    if (!m.well_formed()) {
      fail(Errc::MalformedOutput, "malformed box token '" + text.substr(m.offset, std::min<std::size_t>(m.length, 60)) + "'");
    }
    const auto hit = std::find_if(annotation.boxes.begin(), annotation.boxes.end(), [&](const BoundingBox& b) {
      return b.rect.x_min == m.values[0] && b.rect.y_min == m.values[1] && b.rect.x_max == m.values[2] &&
             b.rect.y_max == m.values[3];
    });
    if (hit == annotation.boxes.end()) {
      fail(Errc::MalformedOutput, "cited box " + text.substr(m.offset, m.length) + " is not in the annotation");
    }
    if (std::find(refs.begin(), refs.end(), *hit) == refs.end()) refs.push_back(*hit);
  }
  return refs;
}

bool looks_like_refusal(const std::string& text, const std::vector<std::string>& phrases) {
  const auto head = to_lower(trim(text.substr(0, 200)));
  return std::any_of(phrases.begin(), phrases.end(),
                     [&](const std::string& p) { return head.find(to_lower(p)) != std::string::npos; });
}

GeneratedText generate(const StructuredAnnotation& annotation, const PromptTemplate& tmpl,
                       const DiseaseVocabulary& vocabulary, ChatAdapter& adapter, const GenerateOptions& options) {
  if (options.retries < 0) fail(Errc::InvalidArgument, "retries must be >= 0");
  auto request = render_prompt(annotation, tmpl, vocabulary, options.render);
  request.temperature = options.temperature;

  Errc last = Errc::MalformedOutput;
  std::string last_reason;
  for (int k = 0; k <= options.retries; ++k) {
    request.seed = completion_seed(options.base_seed, annotation.image_id, tmpl.id, options.attempt, k, options.retries);
    std::string text;
    try {
      text = trim(adapter.complete(request));
    } catch (const Error& e) {
      if (e.code() != Errc::AdapterFailure) throw;
      last = Errc::AdapterFailure;
      last_reason = e.what();
      continue;
    }
    if (text.empty()) {
      last = Errc::MalformedOutput;
      last_reason = "empty completion";
      continue;
    }
    if (looks_like_refusal(text, options.refusal_phrases)) {
      last = Errc::RefusalDetected;
      last_reason = "model refused: " + text.substr(0, 80);
      continue;
    }
    if (adapter.supports_sampling() &&
        std::find(options.previous_texts.begin(), options.previous_texts.end(), text) != options.previous_texts.end()) {
      last = Errc::MalformedOutput;
      last_reason = "completion repeats an earlier text";
      continue;
    }
    GeneratedText out;
    try {
      out.box_refs = resolve_box_refs(text, annotation);
    } catch (const Error& e) {
      last = Errc::MalformedOutput;
      last_reason = e.what();
      continue;
    }
    out.image_id = annotation.image_id;
    out.template_id = tmpl.id;
    out.purpose = tmpl.purpose;
    out.text = std::move(text);
    out.generator_tag = adapter.tag();
    out.attempt = options.attempt;
    out.seed = *request.seed;
    out.retry_count = k;
    if (tmpl.user_template.find("{target}") != std::string::npos) {
      out.target = options.render.target;
      if (!out.target && !annotation.disease_labels.empty()) {
        const auto& d = *annotation.disease_labels.begin();
        const auto g = annotation.grading_labels.find(d);
        out.target = vocabulary.verbalize(d, g == annotation.grading_labels.end() ? std::nullopt : std::optional<int>(g->second));
      }
    }
    return out;
  }
  fail(last, annotation.image_id + "/" + tmpl.id + ": " + last_reason + " (after " +
                 std::to_string(options.retries + 1) + " completions)");
}

}  // namespace fundus::expansion
