#include "fundus/curator/rule_bank.hpp"

#include <fstream>

#include "fundus/core/error.hpp"
#include "fundus/core/json_io.hpp"

namespace fundus::curator {
namespace {

std::map<std::string, std::vector<std::string>> builtin_slots() {
  return {
      {"general_report.prompt",
       {"Generate a diagnostic report based on the fundus image.",
        "Write a standardized examination report for this fundus photograph.",
        "Please produce a clinical report describing this fundus image.",
        "Summarize the findings of this color fundus photograph in a report.",
        "Provide a structured fundus examination report for this image.",
        "Describe this fundus image as you would in an ophthalmology report.",
        "What does this fundus photograph show? Answer in report form.",
        "Draft a diagnostic report for the retina shown in this image.",
        "Give a concise report of the fundus findings in this photograph.",
        "Review this fundus image and write the examination report."}},
      {"regional_qa.prompt",
       {"Label the location of {category}.",
        "Where are the {category} in this fundus image?",
        "Locate the {category} in this image and give its bounding box.",
        "Mark the position of the {category}.",
        "Identify the {category} and report its location.",
        "Find the {category} in the fundus photograph.",
        "Give the bounding box of the {category} in this image.",
        "Point out where the {category} can be seen.",
        "Detect the {category} and provide coordinates.",
        "Show the region containing the {category}."}},
      {"regional_qa.answer_one",
       {"The {category} is located at {boxes}.",
        "{category}: {boxes}.",
        "The {category} can be found at {boxes}.",
        "I found the {category} at {boxes}."}},
      {"regional_qa.answer_many",
       {"There are {count} regions of {category}: {boxes}.",
        "The {category} appear in {count} regions: {boxes}.",
        "{count} areas of {category} are present at {boxes}.",
        "I found {category} in {count} places: {boxes}."}},
      {"grounding_report.prompt",
       {"Describe the fundus image with positional information.",
        "Describe the fundus image with reference to its location information.",
        "Write a report for this fundus image and give the location of each finding.",
        "Report the findings of this image together with their bounding boxes.",
        "Describe each visible structure and lesion along with where it lies.",
        "Provide a grounded description of this fundus photograph.",
        "Give a region-by-region report of this fundus image with coordinates.",
        "Describe this retina and localize every finding you mention.",
        "Write a localized report of the anatomical landmarks and lesions in this image.",
        "Explain what you see in this fundus image, citing the position of each region."}},
      {"diagnostic.turn1",
       {"Please analyze the abnormal regions in the image.",
        "Which regions of this fundus image look abnormal? Describe them.",
        "Describe the lesions and landmarks in this image and where they are.",
        "Analyze the notable regions of this fundus photograph with their positions.",
        "What regions stand out in this image? Give their locations and features.",
        "Examine the fundus image and describe any abnormal areas.",
        "Point out and characterize the key regions of this fundus image.",
        "Start with the regions: what abnormal findings do you see, and where?",
        "Describe the location and appearance of the findings in this image.",
        "Look at this fundus photograph and analyze its abnormal regions."}},
      {"diagnostic.turn2",
       {"Based on the characteristics of the fundus image, provide a diagnostic suggestion.",
        "Based on the characteristics of the fundus image, provide a diagnostic conclusion.",
        "Given these findings, what is your diagnostic suggestion?",
        "Considering the regions you described, what diagnosis do they point to?",
        "Using the features above, give a diagnostic conclusion.",
        "What diagnosis is supported by the regions you just analyzed?",
        "Combine these observations into a diagnostic suggestion.",
        "From these image characteristics, what would you diagnose?",
        "Based on the findings so far, provide your diagnosis.",
        "Now reason from these features to a diagnosis."}},
      {"diagnostic.conclusion",
       {"Taking the {features} described above into account, the patient is diagnosed with {diagnosis}.",
        "Together with the {features} noted earlier, these findings indicate {diagnosis}.",
        "Given the {features} described above, the diagnosis is {diagnosis}.",
        "In light of the {features} identified before, the conclusion is {diagnosis}."}},
      {"diagnostic.normal",
       {"Taking the {features} described above into account, no disease is identified and the fundus is within normal limits.",
        "Apart from the {features} noted earlier, no pathological finding is present; the fundus appears normal.",
        "The {features} described above appear normal, and no retinal disease is diagnosed."}},
      {"confirmation.turn1",
       {"Please generate a preliminary diagnostic analysis based on the fundus image.",
        "Give a first diagnostic impression of this fundus photograph.",
        "What is your preliminary assessment of this fundus image?",
        "Provide an initial diagnostic overview for this image.",
        "Offer a coarse diagnostic analysis of this fundus photograph.",
        "What conditions might this fundus image suggest at first glance?",
        "Start with a preliminary analysis of this retina.",
        "Summarize the likely diagnoses suggested by this fundus image.",
        "Give an overview of the possible findings in this fundus photograph.",
        "Provide a preliminary reading of this fundus image."}},
      {"confirmation.turn2",
       {"Please analyze the fundus features in this image that may indicate {target}.",
        "Describe and analyze the fundus features related to {target} in this image.",
        "Describe and analyze the fundus features indicative of {target} in this image.",
        "Which features in this image support or argue against {target}?",
        "Verify the findings that bear on {target}.",
        "Look closer: what fine-grained features suggest {target}?",
        "Check this image for the characteristic signs of {target}.",
        "Examine the features relevant to {target} in more detail.",
        "What evidence in this fundus image relates to {target}?",
        "Confirm or refute {target} based on specific fundus features."}},
  };
}

}  // namespace

RuleBank::RuleBank(std::map<std::string, std::vector<std::string>> slots) {
  for (auto& [name, texts] : slots) {
    if (texts.empty()) fail(Errc::InvalidArgument, "rule slot " + name + " is empty");
    auto& rules = slots_[name];
    for (std::size_t i = 0; i < texts.size(); ++i) {
      const auto n = std::to_string(i + 1);
      rules.push_back({name + "." + std::string(2 - std::min<std::size_t>(2, n.size()), '0') + n, std::move(texts[i])});
    }
  }
}

const RuleBank& RuleBank::builtin() {
  static const RuleBank bank(builtin_slots());
  return bank;
}

RuleBank RuleBank::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::IoError, "cannot open rule bank " + path.string());
  auto slots = builtin_slots();
  try {
    const auto doc = json::parse(in);
    for (const auto& [name, texts] : doc.at("slots").items()) {
      if (!slots.count(name)) fail(Errc::InvalidArgument, "unknown rule slot " + name);
      slots[name] = texts.get<std::vector<std::string>>();
    }
  } catch (const json::exception& e) {
    fail(Errc::ParseError, path.string() + ": " + e.what());
  }
  return RuleBank(std::move(slots));
}

const std::vector<Rule>& RuleBank::slot(std::string_view name) const {
  const auto it = slots_.find(name);
  if (it == slots_.end()) fail(Errc::NotFound, "no rule slot " + std::string(name));
  return it->second;
}

const Rule& RuleBank::pick(std::string_view name, SeededRng& rng) const {
  const auto& rules = slot(name);
  return rules[rng.below(rules.size())];
}

std::string fill(std::string_view text, const std::map<std::string, std::string>& values) {
  std::string out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto open = text.find('{', pos);
    if (open == std::string_view::npos) {
      out.append(text.substr(pos));
      break;
    }
    const auto close = text.find('}', open);
    if (close == std::string_view::npos) fail(Errc::InvalidArgument, "unclosed placeholder in rule");
    out.append(text.substr(pos, open - pos));
    const std::string name(text.substr(open + 1, close - open - 1));
    const auto it = values.find(name);
    if (it == values.end()) fail(Errc::InvalidArgument, "rule placeholder {" + name + "} has no value");
    out += it->second;
    pos = close + 1;
  }
  // Rules may start with a placeholder ("{category}: ..."); keep sentences capitalized.
  if (!out.empty() && out[0] >= 'a' && out[0] <= 'z') out[0] = static_cast<char>(out[0] - 'a' + 'A');
  return out;
}

}  // namespace fundus::curator
