#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "fundus/core/json_io.hpp"

namespace fundus::expansion {

struct ChatMessage {
  std::string role;
  std::string content;
  /// Local files are sent inline as data URIs; anything else is passed on
  /// as an image URL.
  std::vector<std::string> images = {};
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  std::optional<std::uint64_t> seed;
  int max_tokens = 1024;
};

json to_json(const ChatRequest& request);

/// Seam around any chat-completions model. Implementations must be safe to
/// call from several threads.
class ChatAdapter {
 public:
  virtual ~ChatAdapter() = default;

  /// Throws AdapterFailure on transport or protocol errors.
  virtual std::string complete(const ChatRequest& request) = 0;

  /// Opaque identifier of the generator, stored with generated texts and
  /// never shown to reviewers.
  [[nodiscard]] virtual std::string tag() const = 0;

  /// Whether different seeds can yield different completions.
  [[nodiscard]] virtual bool supports_sampling() const { return false; }
};

struct HttpChatOptions {
  /// Base URL (".../v1/chat/completions" is appended when the path is empty)
  /// or a full completions URL.
  std::string url;
  std::string model;
  /// Name of the environment variable holding the bearer token; unset or
  /// empty variable means no Authorization header.
  std::string api_key_env = "FUNDUS_API_KEY";
  std::chrono::milliseconds timeout{60000};
  /// JSONL request/response log; the token is never written.
  std::optional<std::filesystem::path> log_path;
};

class HttpChatAdapter final : public ChatAdapter {
 public:
  explicit HttpChatAdapter(HttpChatOptions options);

  std::string complete(const ChatRequest& request) override;
  [[nodiscard]] std::string tag() const override { return "http:" + options_.model; }
  [[nodiscard]] bool supports_sampling() const override { return true; }

 private:
  void log(const json& entry);

  HttpChatOptions options_;
  std::string origin_;
  std::string path_;
  std::mutex log_mutex_;
};

/// Always returns the same text.
class EchoChatAdapter final : public ChatAdapter {
 public:
  explicit EchoChatAdapter(std::string text) : text_(std::move(text)) {}
  std::string complete(const ChatRequest&) override { return text_; }
  [[nodiscard]] std::string tag() const override { return "stub:echo"; }

 private:
  std::string text_;
};

/// Replays a fixed list of replies; the last one repeats once the list is
/// exhausted. Every request is recorded.
class ScriptedChatAdapter final : public ChatAdapter {
 public:
  explicit ScriptedChatAdapter(std::vector<std::string> replies, bool sampling = false);

  std::string complete(const ChatRequest& request) override;
  [[nodiscard]] std::string tag() const override { return "stub:scripted"; }
  [[nodiscard]] bool supports_sampling() const override { return sampling_; }

  [[nodiscard]] std::vector<ChatRequest> requests() const;

 private:
  mutable std::mutex mutex_;
  std::deque<std::string> replies_;
  std::vector<ChatRequest> requests_;
  bool sampling_;
};

/// Offline expander: reads the region lines and findings out of the prompt
/// and writes a short grounded description. Phrasing depends on the request
/// seed, so regeneration produces a different text.
class RuleBasedExpander final : public ChatAdapter {
 public:
  std::string complete(const ChatRequest& request) override;
  [[nodiscard]] std::string tag() const override { return "stub:expander"; }
  [[nodiscard]] bool supports_sampling() const override { return true; }
};

}  // namespace fundus::expansion
