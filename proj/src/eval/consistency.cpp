#include "fundus/eval/consistency.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "fundus/core/error.hpp"
#include "fundus/core/parallel.hpp"
#include "fundus/eval/report.hpp"

namespace fundus::eval {

namespace {

bool blank(std::string_view s) { return s.find_first_not_of(" \t\r\n") == std::string_view::npos; }

std::vector<std::string> dedup(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& s : items)
    if (seen.insert(s).second) out.push_back(s);
  return out;
}

std::string strip_fence(const std::string& reply) {
  auto b = reply.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = reply.find_last_not_of(" \t\r\n");
  std::string s = reply.substr(b, e - b + 1);
  if (s.rfind("```", 0) != 0) return s;
  auto nl = s.find('\n');
  if (nl == std::string::npos || s.size() < 6 || s.compare(s.size() - 3, 3, "```") != 0) return s;
  return s.substr(nl + 1, s.size() - 3 - (nl + 1));
}

void check_case(const ConsistencyCase& c) {
  if (c.labels.empty()) fail(Errc::InvalidArgument, "case " + c.image_id + " has no ground-truth labels");
}

}  // namespace

ConsistencyCase consistency_case_from_json(const json& j) {
  try {
    ConsistencyCase c;
    c.image_id = j.at("image_id").get<std::string>();
    c.labels = j.at("labels").get<std::vector<std::string>>();
    c.report = j.value("report", std::string{});
    check_case(c);
    return c;
  } catch (const json::exception& e) {
    fail(Errc::ParseError, std::string("consistency case: ") + e.what());
  }
}

std::vector<ConsistencyCase> load_consistency_cases(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::IoError, "cannot read " + path.string());
  std::vector<ConsistencyCase> cases;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    try {
      cases.push_back(consistency_case_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      fail(Errc::ParseError, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cases;
}

JudgeVerdict parse_judge_verdict(const std::string& reply, const std::vector<std::string>& labels_in) {
  const auto labels = dedup(labels_in);
  json j;
  try {
    j = json::parse(strip_fence(reply));
  } catch (const json::exception& e) {
    fail(Errc::MalformedJudgeOutput, std::string("judge reply is not JSON: ") + e.what());
  }
  auto bad = [](const std::string& why) { fail(Errc::MalformedJudgeOutput, "judge reply: " + why); };
  if (!j.is_object()) bad("expected an object");
  for (const char* key : {"generated_features", "matches", "union_size"})
    if (!j.contains(key)) bad(std::string("missing '") + key + "'");

  JudgeVerdict v;
  const auto& feats = j["generated_features"];
  if (!feats.is_array()) bad("generated_features must be an array");
  for (const auto& f : feats) {
    if (!f.is_string()) bad("generated_features must hold strings");
    v.generated_features.push_back(f.get<std::string>());
  }
  v.generated_features = dedup(v.generated_features);

  const auto& matches = j["matches"];
  if (!matches.is_object()) bad("matches must be an object");
  for (const auto& [label, m] : matches.items()) {
    if (!m.is_boolean()) bad("match for '" + label + "' must be a boolean");
    if (std::find(labels.begin(), labels.end(), label) == labels.end()) bad("match for unknown label '" + label + "'");
    v.matches[label] = m.get<bool>();
  }
  for (const auto& l : labels)
    if (!v.matches.count(l)) bad("no match decision for '" + l + "'");

  const auto& u = j["union_size"];
  if (!u.is_number_integer() || u.get<long long>() < 0) bad("union_size must be a non-negative integer");
  v.union_size = u.get<std::size_t>();
  const std::size_t nl = labels.size();
  const std::size_t ns = v.generated_features.size();
  if (v.union_size < std::max(nl, ns) || v.union_size > nl + ns) {
    bad("union_size " + std::to_string(v.union_size) + " outside [" + std::to_string(std::max(nl, ns)) + ", " +
        std::to_string(nl + ns) + "]");
  }
  const bool any_match = std::any_of(v.matches.begin(), v.matches.end(), [](const auto& kv) { return kv.second; });
  if (any_match && ns == 0) bad("a label is matched but no generated features were extracted");
  return v;
}

double consistency_score(const JudgeVerdict& verdict) {
  if (verdict.union_size == 0) return 0.0;
  const auto matched = std::count_if(verdict.matches.begin(), verdict.matches.end(),
                                     [](const auto& kv) { return kv.second; });
  return static_cast<double>(matched) / static_cast<double>(verdict.union_size);
}

expansion::ChatRequest judge_request(const ConsistencyCase& c) {
  std::string labels;
  for (const auto& l : dedup(c.labels)) labels += "- " + l + "\n";
  expansion::ChatRequest req;
  req.temperature = 0;
  req.seed = 0;
  req.messages = {
      {"system",
       "You grade an ophthalmology report against reference findings. Extract the set S of clinical findings the "
       "report states, including negative findings. A reference label matches when S contains a finding with the "
       "same clinical meaning, in both directions. Count |L u S| after merging findings that mean the same thing. "
       "Reply with JSON only, exactly this shape:\n"
       "{\"generated_features\": [\"...\"], \"matches\": {\"<label>\": true|false}, \"union_size\": <int>}"},
      {"user", "Reference labels L:\n" + labels + "\nReport:\n" + c.report}};
  return req;
}

ConsistencyResult clinical_consistency(const ConsistencyCase& c, expansion::ChatAdapter& judge) {
  check_case(c);
  ConsistencyResult r;
  r.image_id = c.image_id;
  r.judge_tag = judge.tag();
  if (blank(c.report)) {
    const auto labels = dedup(c.labels);
    for (const auto& l : labels) r.verdict.matches[l] = false;
    r.verdict.union_size = labels.size();
    return r;
  }
  const auto req = judge_request(c);
  for (int attempt = 0; attempt < 2; ++attempt) {
    JudgeExchange ex{to_json(req), {}, std::nullopt};
    try {
      ex.reply = judge.complete(req);
    } catch (const std::exception& e) {
      ex.error = e.what();
      r.transcript.push_back(ex);
      fail(Errc::JudgeFailure, "judge failed on " + c.image_id + ": " + e.what());
    }
    try {
      r.verdict = parse_judge_verdict(ex.reply, c.labels);
      r.transcript.push_back(ex);
      r.score = consistency_score(r.verdict);
      return r;
    } catch (const Error& e) {
      ex.error = e.what();
      r.transcript.push_back(ex);
      if (attempt == 1) fail(Errc::MalformedJudgeOutput, "case " + c.image_id + ": " + e.what());
    }
  }
  fail(Errc::MalformedJudgeOutput, "case " + c.image_id);
}

json ConsistencyResult::to_json() const {
  json transcript_json = json::array();
  for (const auto& ex : transcript) {
    json e = {{"request", ex.request}, {"reply", ex.reply}};
    if (ex.error) e["error"] = *ex.error;
    transcript_json.push_back(e);
  }
  return {{"image_id", image_id},
          {"score", score},
          {"generated_features", verdict.generated_features},
          {"matches", verdict.matches},
          {"union_size", verdict.union_size},
          {"judge", judge_tag},
          {"transcript", transcript_json}};
}

double ConsistencyReport::mean_score() const {
  if (results.empty()) return 0.0;
  double sum = 0;
  for (const auto& r : results) sum += r.score;
  return sum / static_cast<double>(results.size());
}

json ConsistencyReport::to_json() const {
  json cases = json::array();
  for (const auto& r : results) {
    json row = r.to_json();
    row.erase("transcript");
    cases.push_back(row);
  }
  return {{"mean_score", mean_score()}, {"cases", results.size()}, {"results", cases}};
}

std::string ConsistencyReport::to_csv() const {
  std::string out = "image_id,matched,union_size,score\n";
  for (const auto& r : results) {
    const auto matched = std::count_if(r.verdict.matches.begin(), r.verdict.matches.end(),
                                       [](const auto& kv) { return kv.second; });
    out += csv_field(r.image_id) + "," + std::to_string(matched) + "," + std::to_string(r.verdict.union_size) + "," +
           json(r.score).dump() + "\n";
  }
  out += "mean,,," + json(mean_score()).dump() + "\n";
  return out;
}

ConsistencyReport run_consistency(const std::vector<ConsistencyCase>& cases, expansion::ChatAdapter& judge,
                                  const ConsistencyOptions& options) {
  ConsistencyReport report;
  report.results.resize(cases.size());
  bounded_parallel_for(cases.size(), options.concurrency,
                       [&](std::size_t i) { report.results[i] = clinical_consistency(cases[i], judge); });
  if (options.audit_path) {
    std::string lines;
    for (const auto& r : report.results) lines += r.to_json().dump() + "\n";
    write_text_file(*options.audit_path, lines);
  }
  return report;
}

}  // namespace fundus::eval
