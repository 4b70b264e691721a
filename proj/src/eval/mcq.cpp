#include "fundus/eval/mcq.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>
#include <set>

#include "fundus/core/error.hpp"
#include "fundus/core/parallel.hpp"
#include "fundus/core/vocabulary.hpp"
#include "fundus/eval/report.hpp"
#include "fundus/expansion/generator.hpp"

namespace fundus::eval {

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

const McqOption* option_for(const std::vector<McqOption>& options, char letter) {
  for (const auto& o : options)
    if (o.letter == letter) return &o;
  return nullptr;
}

std::string strip_trailing_punct(std::string s) {
  while (!s.empty() && std::string_view(".,;:!?").find(s.back()) != std::string_view::npos) s.pop_back();
  return trim(s);
}

// Rung 1. nullopt = no candidate, '\0' = conflicting candidates.
std::optional<char> lone_letter(const std::string& response, const std::vector<McqOption>& options) {
  std::string s = strip_trailing_punct(trim(response));
  if (s.size() >= 2 && ((s.front() == '(' && s.back() == ')') || (s.front() == '[' && s.back() == ']')))
    s = trim(s.substr(1, s.size() - 2));
  else if (s.size() == 2 && s.back() == ')')
    s.pop_back();
  if (s.size() == 1) {
    char c = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    if (option_for(options, c)) return c;
  }

  static const std::regex stated(R"((?:answer|option)\s*(?:is|:)\s*\(?([A-Z])\)?(?=\s*(?:$|[.,;:!\n])))",
                                 std::regex::icase);
  std::set<char> found;
  for (auto it = std::sregex_iterator(response.begin(), response.end(), stated); it != std::sregex_iterator(); ++it) {
    const std::string letter = (*it)[1].str();
    char c = letter[0];
    // The letter itself must be upper case; "answer is a ..." is prose.
    if (!std::isupper(static_cast<unsigned char>(c))) continue;
    if (option_for(options, c)) found.insert(c);
  }
  if (found.size() == 1) return *found.begin();
  if (found.size() > 1) return '\0';
  return std::nullopt;
}

// Rung 2.
std::optional<char> letter_prefix(const std::string& response, const std::vector<McqOption>& options) {
  static const std::regex prefix(R"(^\s*\(?([A-Z])[.):]\s+([\s\S]*)$)");
  std::smatch m;
  if (!std::regex_match(response, m, prefix)) return std::nullopt;
  char c = m[1].str()[0];
  if (!option_for(options, c)) return std::nullopt;
  const std::string rest = to_lower(strip_trailing_punct(trim(m[2].str())));
  for (const auto& o : options) {
    if (o.letter != c && to_lower(trim(o.text)) == rest) return '\0';
  }
  return c;
}

struct Span {
  std::size_t begin;
  std::size_t end;
  std::size_t option;
};

// Rung 3.
std::optional<char> option_text(const std::string& response, const std::vector<McqOption>& options) {
  const std::string hay = to_lower(response);
  std::vector<Span> spans;
  for (std::size_t i = 0; i < options.size(); ++i) {
    const std::string needle = to_lower(trim(options[i].text));
    if (needle.empty()) continue;
    for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) {
      const std::size_t end = pos + needle.size();
      bool left = pos == 0 || !is_word_char(hay[pos - 1]) || !is_word_char(needle.front());
      bool right = end == hay.size() || !is_word_char(hay[end]) || !is_word_char(needle.back());
      if (left && right) spans.push_back({pos, end, i});
    }
  }
  std::set<std::size_t> hits;
  for (const auto& s : spans) {
    bool shadowed = std::any_of(spans.begin(), spans.end(), [&](const Span& o) {
      return o.option != s.option && o.begin <= s.begin && s.end <= o.end && (o.end - o.begin) > (s.end - s.begin);
    });
    if (!shadowed) hits.insert(s.option);
  }
  if (hits.size() == 1) return options[*hits.begin()].letter;
  if (hits.size() > 1) return '\0';
  return std::nullopt;
}

std::string options_block(const std::vector<McqOption>& options) {
  std::string out;
  for (const auto& o : options) {
    out += o.letter;
    out += ". " + o.text + "\n";
  }
  return out;
}

MatchResult decided(std::optional<char> letter, MatchRung rung) {
  if (*letter == '\0') return {};
  return {letter, rung};
}

}  // namespace

void McqItem::validate() const {
  if (options.size() < 2 || options.size() > 26)
    fail(Errc::InvalidArgument, "item " + id + ": expected 2-26 options, got " + std::to_string(options.size()));
  std::set<char> letters;
  for (const auto& o : options) {
    if (o.letter < 'A' || o.letter > 'Z') fail(Errc::InvalidArgument, "item " + id + ": option letter must be A-Z");
    if (!letters.insert(o.letter).second)
      fail(Errc::InvalidArgument, "item " + id + ": duplicate option " + std::string(1, o.letter));
  }
  if (!letters.count(answer_letter))
    fail(Errc::InvalidArgument, "item " + id + ": answer " + std::string(1, answer_letter) + " is not an option");
}

json to_json(const McqItem& item) {
  json options = json::array();
  for (const auto& o : item.options) options.push_back({{"letter", std::string(1, o.letter)}, {"text", o.text}});
  return {{"id", item.id},
          {"category", item.category},
          {"image", item.image},
          {"question", item.question},
          {"options", options},
          {"answer", std::string(1, item.answer_letter)}};
}

namespace {
char parse_letter(const json& j, const std::string& what) {
  const auto s = j.get<std::string>();
  if (s.size() != 1) fail(Errc::ParseError, what + " must be a single letter");
  return static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
}
}  // namespace

McqItem mcq_item_from_json(const json& j) {
  try {
    McqItem item;
    item.id = j.at("id").get<std::string>();
    item.category = j.value("category", std::string{});
    item.image = j.value("image", std::string{});
    item.question = j.at("question").get<std::string>();
    const json& opts = j.at("options");
    if (opts.is_object()) {
      for (const auto& [k, v] : opts.items()) item.options.push_back({parse_letter(k, "option key"), v.get<std::string>()});
      std::sort(item.options.begin(), item.options.end(),
                [](const McqOption& a, const McqOption& b) { return a.letter < b.letter; });
    } else {
      char next = 'A';
      for (const auto& o : opts) {
        if (o.is_string()) {
          item.options.push_back({next, o.get<std::string>()});
        } else {
          item.options.push_back({parse_letter(o.at("letter"), "option letter"), o.at("text").get<std::string>()});
        }
        ++next;
      }
    }
    const json& answer = j.contains("answer") ? j.at("answer") : j.at("answer_letter");
    item.answer_letter = parse_letter(answer, "answer");
    item.validate();
    return item;
  } catch (const json::exception& e) {
    fail(Errc::ParseError, std::string("malformed MCQ item: ") + e.what());
  }
}

std::vector<McqItem> load_mcq_items(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::IoError, "cannot read " + path.string());
  std::vector<McqItem> items;
  std::set<std::string> ids;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(Errc::ParseError, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    auto item = mcq_item_from_json(j);
    if (item.image.size() && std::filesystem::path(item.image).is_relative() &&
        item.image.find("://") == std::string::npos)
      item.image = (path.parent_path() / item.image).string();
    if (!ids.insert(item.id).second) fail(Errc::DuplicateId, "duplicate MCQ item " + item.id);
    items.push_back(std::move(item));
  }
  return items;
}

std::string to_string(MatchRung rung) {
  switch (rung) {
    case MatchRung::Unmatched: return "unmatched";
    case MatchRung::Letter: return "letter";
    case MatchRung::LetterPrefix: return "letter_prefix";
    case MatchRung::OptionText: return "option_text";
    case MatchRung::Judge: return "judge";
  }
  return "unmatched";
}

MatchResult match_answer(const std::string& response, const std::vector<McqOption>& options,
                         const MatchOptions& options_match) {
  if (auto l = lone_letter(response, options)) return decided(l, MatchRung::Letter);
  if (auto l = letter_prefix(response, options)) return decided(l, MatchRung::LetterPrefix);
  if (auto l = option_text(response, options)) return decided(l, MatchRung::OptionText);
  if (options_match.judge && !trim(response).empty()) {
    expansion::ChatRequest req;
    req.temperature = 0;
    req.seed = 0;
    req.messages = {{"system", "You map a free-text answer to one of the listed options. Reply with the option "
                               "letter only, or NONE if the answer does not choose exactly one option."},
                    {"user", "Options:\n" + options_block(options) + "\nAnswer:\n" + response}};
    const std::string verdict = options_match.judge->complete(req);
    auto l = lone_letter(verdict, options);
    if (l && *l != '\0') return {l, MatchRung::Judge};
  }
  return {};
}

expansion::ChatRequest mcq_request(const McqItem& item) {
  expansion::ChatRequest req;
  req.temperature = 0;
  req.seed = 0;
  req.max_tokens = 256;
  expansion::ChatMessage user{"user", item.question + "\n" + options_block(item.options) +
                                          "Answer with the letter of the correct option."};
  if (!item.image.empty()) user.images.push_back(item.image);
  req.messages = {std::move(user)};
  return req;
}

McqReport run_mcq(const std::vector<McqItem>& items, expansion::ChatAdapter& adapter, const McqOptions& options) {
  for (const auto& item : items) item.validate();
  std::vector<McqItemResult> results(items.size());
  bounded_parallel_for(items.size(), options.concurrency, [&](std::size_t i) {
    const McqItem& item = items[i];
    McqItemResult& r = results[i];
    r.id = item.id;
    r.category = item.category;
    const auto req = mcq_request(item);
    for (int attempt = 0;; ++attempt) {
      r.response = adapter.complete(req);
      if (!trim(r.response).empty() && !expansion::looks_like_refusal(r.response, options.refusal_phrases)) break;
      if (attempt >= options.retry_budget) {
        r.budget_exhausted = true;
        break;
      }
      ++r.retries;
    }
    if (!r.budget_exhausted) {
      auto m = match_answer(r.response, item.options, options.match);
      r.predicted = m.letter;
      r.rung = m.rung;
      r.correct = m.letter == item.answer_letter;
    }
  });

  McqReport report;
  for (auto& r : results) {
    auto& cat = report.per_category[r.category];
    ++cat.total;
    ++report.overall.total;
    if (r.correct) {
      ++cat.correct;
      ++report.overall.correct;
    }
    if (r.budget_exhausted) ++report.budget_exhausted;
  }
  report.items = std::move(results);
  return report;
}

json McqReport::to_json() const {
  auto score = [](const CategoryScore& s) {
    return json{{"correct", s.correct}, {"total", s.total}, {"accuracy", s.accuracy()}};
  };
  json cats = json::object();
  for (const auto& [name, s] : per_category) cats[name] = score(s);
  json rows = json::array();
  for (const auto& r : items) {
    rows.push_back({{"id", r.id},
                    {"category", r.category},
                    {"response", r.response},
                    {"predicted", r.predicted ? json(std::string(1, *r.predicted)) : json(nullptr)},
                    {"match", eval::to_string(r.rung)},
                    {"correct", r.correct},
                    {"retries", r.retries},
                    {"budget_exhausted", r.budget_exhausted}});
  }
  return {{"overall", score(overall)},
          {"per_category", cats},
          {"budget_exhausted", budget_exhausted},
          {"items", rows}};
}

std::string McqReport::to_csv() const {
  std::string out = "category,correct,total,accuracy\n";
  auto row = [&](const std::string& name, const CategoryScore& s) {
    out += csv_field(name) + "," + std::to_string(s.correct) + "," + std::to_string(s.total) + "," +
           json(s.accuracy()).dump() + "\n";
  };
  for (const auto& [name, s] : per_category) row(name, s);
  row("overall", overall);
  return out;
}

}  // namespace fundus::eval
