#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fundus/boxgen/boxgen.hpp"
#include "fundus/core/json_io.hpp"
#include "fundus/curator/dataset.hpp"
#include "fundus/selftrain/self_training.hpp"

namespace fundus::service {

struct PathsConfig {
  std::filesystem::path manifest;
  std::filesystem::path masks;
  /// Every pipeline artifact lives under here.
  std::filesystem::path work;
  /// Defaults to <work>/review.db.
  std::filesystem::path store;
  std::optional<std::filesystem::path> vocabulary;
  std::optional<std::filesystem::path> templates;
  std::optional<std::filesystem::path> rules;
  /// Built review UI, served at "/".
  std::optional<std::filesystem::path> static_dir;
};

struct BoxgenConfig {
  boxgen::ClusterParams cluster;
  std::size_t concurrency = 4;
};

struct SelftrainConfig {
  bool enabled = false;
  /// "subprocess:<command>" or an http(s) URL.
  std::string segmenter;
  int rounds = 1;
  selftrain::AcceptPolicy policy;
  std::size_t predict_batch = 16;
  std::size_t max_in_flight = 2;
  std::chrono::milliseconds timeout{std::chrono::minutes(10)};
};

struct ExpandConfig {
  std::string adapter = "stub:expander";
  std::vector<std::string> templates;
  int retries = 3;
  double temperature = 0.7;
  std::uint64_t seed = 0;
  std::size_t concurrency = 4;
};

enum class QcMode { Human, AutoAccept };

struct QcConfig {
  QcMode mode = QcMode::Human;
  std::chrono::milliseconds lease{std::chrono::minutes(15)};
};

struct CurateConfig {
  curator::DatasetRecipe recipe;
  /// Relative to work.
  std::string output = "dataset.jsonl";
};

struct ServeConfig {
  std::string bind = "127.0.0.1";
  int port = 8080;
  std::chrono::milliseconds regen_interval{1000};
};

struct EvalConfig {
  std::string target;
  std::string judge;
  int retry_budget = 3;
  std::size_t concurrency = 4;
};

/// Config file, JSON. Relative paths resolve against the file's directory.
/// Seeds have no defaults: expand.seed and the recipe seed are required.
struct Config {
  std::filesystem::path source;
  PathsConfig paths;
  BoxgenConfig boxgen;
  SelftrainConfig selftrain;
  ExpandConfig expand;
  QcConfig qc;
  CurateConfig curate;
  ServeConfig serve;
  EvalConfig eval;

  /// Errors: ParseError (bad JSON, unknown key), MissingField, NotFound (a
  /// referenced path does not exist), InvalidArgument.
  static Config load(const std::filesystem::path& path);
  static Config from_json(const json& j, const std::filesystem::path& base_dir);

  /// Checks that every referenced input exists.
  void check_paths() const;
};

std::string to_string(QcMode mode);

}  // namespace fundus::service
