#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "fundus/core/json_io.hpp"

namespace fundus::eval {

/// RFC 4180 quoting when the field needs it.
std::string csv_field(std::string_view text);

/// Writes atomically (temp file + rename), creating parent directories.
void write_text_file(const std::filesystem::path& path, const std::string& text);
void write_json_file(const std::filesystem::path& path, const json& doc);

/// The CSV sibling of a JSON report path: out.json -> out.csv.
std::filesystem::path csv_path_for(const std::filesystem::path& report);

}  // namespace fundus::eval
