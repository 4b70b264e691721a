#include "fundus/curator/instruction.hpp"

#include <algorithm>

#include "fundus/core/error.hpp"
#include "fundus/expansion/box_tokens.hpp"

namespace fundus::curator {

namespace {
constexpr std::string_view kImageTag = "<image>\n";
}

std::string to_string(TaskType type) {
  switch (type) {
    case TaskType::GeneralReport: return "general_report";
    case TaskType::RegionalQa: return "regional_qa";
    case TaskType::GroundingReport: return "grounding_report";
    case TaskType::MultiturnDiagnostic: return "multiturn_diagnostic";
    case TaskType::MultiturnConfirmation: return "multiturn_confirmation";
  }
  return "?";
}

TaskType parse_task_type(std::string_view text) {
  for (auto t : kAllTaskTypes) {
    if (to_string(t) == text) return t;
  }
  fail(Errc::InvalidArgument, "unknown task type '" + std::string(text) + "'");
}

bool is_multiturn(TaskType type) {
  return type == TaskType::MultiturnDiagnostic || type == TaskType::MultiturnConfirmation;
}

void InstructionSample::check() const {
  if (turns.size() < 2 || turns.size() % 2 != 0) fail(Errc::InvalidArgument, id + ": turns must form complete pairs");
  for (std::size_t i = 0; i < turns.size(); ++i) {
    const Role want = i % 2 == 0 ? Role::User : Role::Assistant;
    if (turns[i].role != want) fail(Errc::InvalidArgument, id + ": turns must alternate user/assistant");
    if (turns[i].text.empty()) fail(Errc::InvalidArgument, id + ": empty turn");
  }
  if (provenance.size() != pair_count()) fail(Errc::InvalidArgument, id + ": one provenance record per pair required");
  if (is_multiturn(task_type) && !split_from) {
    if (pair_count() < 2) fail(Errc::InvalidArgument, id + ": multiturn sample needs at least two user turns");
  } else if (pair_count() != 1) {
    fail(Errc::InvalidArgument, id + ": single-turn sample must have exactly one pair");
  }
}

json to_json(const InstructionSample& s) {
  json messages = json::array();
  for (std::size_t i = 0; i < s.turns.size(); ++i) {
    const auto& t = s.turns[i];
    messages.push_back({{"role", t.role == Role::User ? "user" : "assistant"},
                        {"content", i == 0 ? std::string(kImageTag) + t.text : t.text}});
  }
  json prov = json::array();
  for (const auto& p : s.provenance) {
    json boxes = json::array();
    for (const auto& b : p.boxes) boxes.push_back(rect_to_json(b));
    json entry = {{"prompt_rule", p.prompt_rule}, {"source", p.source},   {"text_ids", p.text_ids},
                  {"answer_rule", p.answer_rule}, {"features", p.features}, {"boxes", boxes}};
    entry["builds_on"] = p.builds_on ? json(*p.builds_on) : json(nullptr);
    prov.push_back(std::move(entry));
  }
  json j = {{"id", s.id},
            {"image", s.image},
            {"image_id", s.image_id},
            {"task_type", to_string(s.task_type)},
            {"messages", messages},
            {"provenance", prov}};
  if (s.split_from) j["split_from"] = *s.split_from;
  return j;
}

InstructionSample instruction_sample_from_json(const json& j) {
  try {
    InstructionSample s;
    s.id = j.at("id").get<std::string>();
    s.image = j.at("image").get<std::string>();
    s.image_id = j.at("image_id").get<std::string>();
    s.task_type = parse_task_type(j.at("task_type").get<std::string>());
    const auto& messages = j.at("messages");
    for (std::size_t i = 0; i < messages.size(); ++i) {
      const auto role = messages[i].at("role").get<std::string>();
      auto text = messages[i].at("content").get<std::string>();
      if (i == 0 && text.rfind(kImageTag, 0) == 0) text.erase(0, kImageTag.size());
      s.turns.push_back({role == "user" ? Role::User : Role::Assistant, std::move(text)});
    }
    for (const auto& p : j.at("provenance")) {
      PairProvenance out;
      out.prompt_rule = p.at("prompt_rule").get<std::string>();
      out.source = p.at("source").get<std::string>();
      out.text_ids = p.at("text_ids").get<std::vector<std::int64_t>>();
      out.answer_rule = p.at("answer_rule").get<std::string>();
      out.features = p.at("features").get<std::vector<std::string>>();
      for (const auto& b : p.at("boxes")) out.boxes.push_back(rect_from_json(b));
      if (!p.at("builds_on").is_null()) out.builds_on = p.at("builds_on").get<std::size_t>();
      s.provenance.push_back(std::move(out));
    }
    if (j.contains("split_from")) s.split_from = j["split_from"].get<std::string>();
    return s;
  } catch (const json::exception& e) {
    fail(Errc::ParseError, std::string("instruction sample: ") + e.what());
  }
}

bool chain_intact(const InstructionSample& s) {
  for (std::size_t i = 1; i < s.provenance.size(); ++i) {
    const auto& p = s.provenance[i];
    if (!p.builds_on || *p.builds_on >= i) return false;
    const auto& earlier = s.provenance[*p.builds_on];
    const bool shares_feature = std::any_of(p.features.begin(), p.features.end(), [&](const std::string& f) {
      return std::find(earlier.features.begin(), earlier.features.end(), f) != earlier.features.end();
    });
    const bool shares_box = std::any_of(p.boxes.begin(), p.boxes.end(), [&](const BoxRect& b) {
      return std::find(earlier.boxes.begin(), earlier.boxes.end(), b) != earlier.boxes.end();
    });
    if (!shares_feature && !shares_box) return false;
  }
  return true;
}

bool contains_box_token(const InstructionSample& s) {
  return std::any_of(s.turns.begin(), s.turns.end(), [](const Turn& t) { return expansion::has_box_token(t.text); });
}

}  // namespace fundus::curator
