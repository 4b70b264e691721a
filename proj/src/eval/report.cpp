#include "fundus/eval/report.hpp"

#include <fstream>

#include "fundus/core/error.hpp"

namespace fundus::eval {

std::string csv_field(std::string_view text) {
  if (text.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(text);
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::IoError, "cannot write " + tmp.string());
    out << text;
    if (!out) fail(Errc::IoError, "write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_json_file(const std::filesystem::path& path, const json& doc) { write_text_file(path, doc.dump(2) + "\n"); }

std::filesystem::path csv_path_for(const std::filesystem::path& report) {
  auto p = report;
  p.replace_extension(".csv");
  return p;
}

}  // namespace fundus::eval
