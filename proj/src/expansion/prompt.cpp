#include "fundus/expansion/prompt.hpp"

#include <fstream>
#include <map>

#include "fundus/core/category.hpp"
#include "fundus/core/error.hpp"
#include "fundus/expansion/box_tokens.hpp"

namespace fundus::expansion {
namespace {

const std::set<std::string> kPlaceholders = {"labels", "grades", "boxes", "boxes?", "notes", "size", "target"};

const char* kSystem =
    "You are an ophthalmologist describing a color fundus photograph. You cannot see the image; "
    "you are given its expert annotations. Region codes: OD optic disc, OC optic cup, EX hard "
    "exudates, CWS cotton-wool spots, MA microaneurysms. Coordinates are pixels with the origin at "
    "the top-left corner.";

const char* kCiteBoxes =
    "When you mention an annotated region, cite it as <box>[x_min, y_min, x_max, y_max]</box> using "
    "exactly the coordinates listed. Do not cite any other box.";

PromptTemplate make(TextPurpose purpose, std::string user, std::string contract) {
  PromptTemplate t;
  t.id = to_string(purpose);
  t.purpose = purpose;
  t.system_text = kSystem;
  t.user_template = std::move(user);
  t.constraint_tags = {kObservationalObjectivity, kClinicalRelevance};
  t.output_contract = std::move(contract);
  return t;
}

std::vector<PromptTemplate> builtin_templates() {
  return {
      make(TextPurpose::GeneralReport,
           "Write a fundus examination report for this {size} image.\n"
           "Annotated findings: {labels}\nGrades: {grades}\nRegions:\n{boxes?}\nNotes: {notes}",
           "Plain prose in a few sentences, no box tokens, no definitive diagnosis."),
      make(TextPurpose::GroundingReport,
           "Write a fundus report that localizes every annotated region of this {size} image.\n"
           "Annotated findings: {labels}\nRegions:\n{boxes}\nNotes: {notes}",
           std::string(kCiteBoxes) + " Cite every listed region once."),
      make(TextPurpose::RegionAnalysis,
           "Analyze the abnormal and landmark regions of this {size} fundus image, giving the "
           "position and visible features of each.\nRegions:\n{boxes}\nNotes: {notes}",
           std::string(kCiteBoxes) + " Describe features only; leave the diagnosis for later."),
      make(TextPurpose::Diagnosis,
           "Based on the characteristics of this fundus image, give a diagnostic suggestion.\n"
           "Annotated findings: {labels}\nGrades: {grades}\nRegions:\n{boxes?}",
           std::string(kCiteBoxes) + " Tie the suggestion to the features you cite."),
      make(TextPurpose::Overview,
           "Give a preliminary diagnostic analysis of this {size} fundus image.\n"
           "Annotated findings: {labels}\nRegions:\n{boxes?}",
           "Mention the most probable finding by name; keep it brief."),
      make(TextPurpose::FeatureVerification,
           "Verify the fine-grained fundus features that bear on {target}.\n"
           "Annotated findings: {labels}\nRegions:\n{boxes?}\nNotes: {notes}",
           std::string(kCiteBoxes) + " State which supporting features are present or absent."),
  };
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string verbalized_label(const StructuredAnnotation& a, const std::string& disease,
                             const DiseaseVocabulary& vocabulary) {
  const auto g = a.grading_labels.find(disease);
  return vocabulary.verbalize(disease, g == a.grading_labels.end() ? std::nullopt : std::optional<int>(g->second));
}

}  // namespace

std::string to_string(TextPurpose purpose) {
  switch (purpose) {
    case TextPurpose::GeneralReport: return "general_report";
    case TextPurpose::GroundingReport: return "grounding_report";
    case TextPurpose::RegionAnalysis: return "region_analysis";
    case TextPurpose::Diagnosis: return "diagnosis";
    case TextPurpose::Overview: return "overview";
    case TextPurpose::FeatureVerification: return "feature_verification";
  }
  return "?";
}

TextPurpose parse_purpose(std::string_view text) {
  for (auto p : kAllPurposes) {
    if (to_string(p) == text) return p;
  }
  fail(Errc::InvalidArgument, "unknown text purpose '" + std::string(text) + "'");
}

std::string constraint_text(std::string_view tag) {
  if (tag == kObservationalObjectivity) {
    return "Describe only what the annotations support: every finding you state must correspond to a "
           "listed label or region, and you must not add structures or lesions that are not listed.";
  }
  if (tag == kClinicalRelevance) {
    return "Point out the features that carry diagnostic weight, phrased as observations and clues "
           "rather than a final diagnosis.";
  }
  fail(Errc::InvalidArgument, "unknown constraint tag '" + std::string(tag) + "'");
}

void PromptTemplate::validate() const {
  if (id.empty()) fail(Errc::InvalidArgument, "template without id");
  for (const auto& required : {kObservationalObjectivity, kClinicalRelevance}) {
    if (!constraint_tags.count(required)) fail(Errc::InvalidArgument, "template " + id + " lacks constraint " + required);
  }
  for (const auto& tag : constraint_tags) constraint_text(tag);
  std::size_t pos = 0;
  while (pos < user_template.size()) {
    const auto open = user_template.find_first_of("{}", pos);
    if (open == std::string::npos) break;
    if (user_template[open] == '}') fail(Errc::InvalidArgument, "template " + id + ": stray '}'");
    const auto close = user_template.find('}', open);
    if (close == std::string::npos) fail(Errc::InvalidArgument, "template " + id + ": unclosed '{'");
    const auto name = user_template.substr(open + 1, close - open - 1);
    if (!kPlaceholders.count(name)) fail(Errc::InvalidArgument, "template " + id + ": unknown placeholder {" + name + "}");
    pos = close + 1;
  }
}

json to_json(const PromptTemplate& t) {
  return {{"id", t.id},
          {"purpose", to_string(t.purpose)},
          {"system_text", t.system_text},
          {"user_template", t.user_template},
          {"constraint_tags", t.constraint_tags},
          {"output_contract", t.output_contract}};
}

PromptTemplate prompt_template_from_json(const json& j) {
  try {
    PromptTemplate t;
    t.id = j.at("id").get<std::string>();
    t.purpose = parse_purpose(j.at("purpose").get<std::string>());
    t.system_text = j.at("system_text").get<std::string>();
    t.user_template = j.at("user_template").get<std::string>();
    t.constraint_tags = j.at("constraint_tags").get<std::set<std::string>>();
    t.output_contract = j.value("output_contract", "");
    t.validate();
    return t;
  } catch (const json::exception& e) {
    fail(Errc::ParseError, std::string("prompt template: ") + e.what());
  }
}

TemplateBank::TemplateBank(std::vector<PromptTemplate> templates) : templates_(std::move(templates)) {
  std::set<std::string> ids;
  for (const auto& t : templates_) {
    t.validate();
    if (!ids.insert(t.id).second) fail(Errc::DuplicateId, "duplicate template id " + t.id);
  }
}

const TemplateBank& TemplateBank::builtin() {
  static const TemplateBank bank(builtin_templates());
  return bank;
}

TemplateBank TemplateBank::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::IoError, "cannot open templates " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    fail(Errc::ParseError, path.string() + ": " + e.what());
  }
  std::vector<PromptTemplate> out;
  for (const auto& t : doc.at("templates")) out.push_back(prompt_template_from_json(t));
  return TemplateBank(std::move(out));
}

const PromptTemplate& TemplateBank::find(std::string_view id) const {
  for (const auto& t : templates_) {
    if (t.id == id) return t;
  }
  fail(Errc::NotFound, "no prompt template '" + std::string(id) + "'");
}

std::string render_box_lines(const StructuredAnnotation& annotation) {
  std::vector<std::string> lines;
  for (Category c : kAllCategories) {
    for (const auto& b : annotation.boxes_of(c)) lines.push_back(std::string(code(c)) + ": " + box_list(b.rect));
  }
  return join(lines, "\n");
}

ChatRequest render_prompt(const StructuredAnnotation& a, const PromptTemplate& tmpl,
                          const DiseaseVocabulary& vocabulary, const RenderOptions& options) {
  auto value_of = [&](const std::string& name) -> std::string {
    if (name == "labels") {
      std::vector<std::string> parts;
      for (const auto& d : a.disease_labels) parts.push_back(verbalized_label(a, d, vocabulary));
      return parts.empty() ? "none" : join(parts, "; ");
    }
    if (name == "grades") {
      std::vector<std::string> parts;
      for (const auto& [d, g] : a.grading_labels) parts.push_back(d + ": " + std::to_string(g));
      return parts.empty() ? "none" : join(parts, "; ");
    }
    if (name == "boxes" || name == "boxes?") {
      if (a.boxes.empty()) {
        if (name == "boxes") fail(Errc::MissingField, "template " + tmpl.id + " needs boxes but the annotation has none");
        return "none";
      }
      return render_box_lines(a);
    }
    if (name == "notes") return a.lesion_notes.empty() ? "none" : join(a.lesion_notes, "; ");
    if (name == "size") return std::to_string(a.image_size.width) + " x " + std::to_string(a.image_size.height);
    if (name == "target") {
      if (options.target) return *options.target;
      if (a.disease_labels.empty()) fail(Errc::MissingField, "template " + tmpl.id + " needs a target disease");
      return verbalized_label(a, *a.disease_labels.begin(), vocabulary);
    }
    fail(Errc::InvalidArgument, "template " + tmpl.id + ": unknown placeholder {" + name + "}");
  };

  std::string user;
  const auto& src = tmpl.user_template;
  std::size_t pos = 0;
  while (pos < src.size()) {
    const auto open = src.find('{', pos);
    if (open == std::string::npos) {
      user.append(src, pos);
      break;
    }
    const auto close = src.find('}', open);
    if (close == std::string::npos) fail(Errc::InvalidArgument, "template " + tmpl.id + ": unclosed '{'");
    user.append(src, pos, open - pos);
    user += value_of(src.substr(open + 1, close - open - 1));
    pos = close + 1;
  }
  if (!tmpl.output_contract.empty()) user += "\n\n" + tmpl.output_contract;

  std::string system = tmpl.system_text;
  if (!tmpl.constraint_tags.empty()) {
    system += "\n\nConstraints:";
    for (const auto& tag : tmpl.constraint_tags) system += "\n- " + constraint_text(tag);
  }
  ChatRequest request;
  request.messages = {{"system", system}, {"user", user}};
  return request;
}

}  // namespace fundus::expansion
