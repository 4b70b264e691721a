#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace fundus {

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Incremental SHA-256 for fingerprinting several inputs together.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(std::string_view bytes);
  /// Feeds the file contents (not the path).
  Sha256& update_file(const std::filesystem::path& path);
  std::string hex();

 private:
  struct Impl;
  Impl* impl_;
};

}  // namespace fundus
