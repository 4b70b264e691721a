#include "fundus/core/vocabulary.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "fundus/core/error.hpp"
#include "fundus/core/json_io.hpp"

namespace fundus {

std::string to_lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return out;
}

std::string trim(std::string_view text) {
  std::size_t b = 0;
  std::size_t e = text.size();
  while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
  return std::string(text.substr(b, e - b));
}

DiseaseVocabulary::DiseaseVocabulary(std::vector<Entry> entries) : entries_(std::move(entries)) {}

DiseaseVocabulary DiseaseVocabulary::builtin() {
  return DiseaseVocabulary({
      {"diabetic retinopathy",
       {"dr", "diabetic retinopathy (dr)"},
       {{0, "no apparent diabetic retinopathy"},
        {1, "mild nonproliferative diabetic retinopathy"},
        {2, "moderate nonproliferative diabetic retinopathy"},
        {3, "severe nonproliferative diabetic retinopathy"},
        {4, "proliferative diabetic retinopathy"}}},
      {"glaucoma", {"glaucomatous optic neuropathy", "suspected glaucoma"}, {}},
      {"cataract", {"cataracts"}, {}},
      {"age-related macular degeneration", {"amd", "armd", "macular degeneration"}, {}},
      {"hypertensive retinopathy", {"hr"}, {}},
      {"pathological myopia", {"pathologic myopia", "high myopia"}, {}},
      {"retinal vein occlusion", {"rvo", "branch retinal vein occlusion", "central retinal vein occlusion"}, {}},
      {"retinitis pigmentosa", {"rp"}, {}},
      {"diabetic macular edema", {"dme", "macular edema"}, {}},
  });
}

DiseaseVocabulary DiseaseVocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::IoError, "cannot open vocabulary " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    fail(Errc::ParseError, path.string() + ": " + e.what());
  }
  std::vector<Entry> entries;
  for (const auto& item : doc.at("diseases")) {
    Entry e;
    e.name = to_lower(trim(item.at("name").get<std::string>()));
    for (const auto& s : item.value("synonyms", json::array())) e.synonyms.push_back(to_lower(trim(s.get<std::string>())));
    for (const auto& [k, v] : item.value("grades", json::object()).items()) {
      e.grades[std::stoi(k)] = v.get<std::string>();
    }
    entries.push_back(std::move(e));
  }
  return DiseaseVocabulary(std::move(entries));
}

const DiseaseVocabulary::Entry* DiseaseVocabulary::find(std::string_view label) const {
  const auto key = to_lower(trim(label));
  for (const auto& e : entries_) {
    if (e.name == key) return &e;
    if (std::find(e.synonyms.begin(), e.synonyms.end(), key) != e.synonyms.end()) return &e;
  }
  return nullptr;
}

std::string DiseaseVocabulary::canonicalize(std::string_view label) const {
  if (const Entry* e = find(label)) return e->name;
  return trim(label);
}

std::string DiseaseVocabulary::verbalize(const std::string& disease, std::optional<int> grade) const {
  const Entry* e = find(disease);
  const std::string name = e ? e->name : trim(disease);
  if (!grade) return name;
  if (e) {
    auto it = e->grades.find(*grade);
    if (it != e->grades.end()) {
      if (to_lower(it->second).find(name) != std::string::npos) return it->second;
      return it->second + " (" + name + ")";
    }
  }
  return name + " (grade " + std::to_string(*grade) + ")";
}

namespace {

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// Position of `needle` in `hay` on word boundaries, or npos.
std::size_t find_word(const std::string& hay, const std::string& needle) {
  if (needle.empty()) return std::string::npos;
  std::size_t pos = hay.find(needle);
  while (pos != std::string::npos) {
    const bool left_ok = pos == 0 || !is_word_char(hay[pos - 1]);
    const std::size_t end = pos + needle.size();
    const bool right_ok = end >= hay.size() || !is_word_char(hay[end]);
    if (left_ok && right_ok) return pos;
    pos = hay.find(needle, pos + 1);
  }
  return std::string::npos;
}

}  // namespace

std::vector<std::string> DiseaseVocabulary::mentions(std::string_view text) const {
  const auto hay = to_lower(text);
  std::vector<std::pair<std::size_t, std::string>> found;
  for (const auto& e : entries_) {
    std::size_t best = find_word(hay, e.name);
    for (const auto& s : e.synonyms) best = std::min(best, find_word(hay, s));
    if (best != std::string::npos) found.emplace_back(best, e.name);
  }
  std::stable_sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::string> out;
  for (auto& f : found) out.push_back(std::move(f.second));
  return out;
}

std::optional<std::string> DiseaseVocabulary::first_mention(std::string_view text) const {
  auto all = mentions(text);
  if (all.empty()) return std::nullopt;
  return all.front();
}

}  // namespace fundus
