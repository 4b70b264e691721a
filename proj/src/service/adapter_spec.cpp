#include "fundus/service/adapter_spec.hpp"

#include <fstream>

#include "fundus/core/error.hpp"
#include "fundus/core/json_io.hpp"

namespace fundus::service {

namespace {

bool starts_with(const std::string& s, std::string_view prefix) { return s.rfind(prefix, 0) == 0; }

bool is_url(const std::string& s) { return starts_with(s, "http://") || starts_with(s, "https://"); }

}  // namespace

std::unique_ptr<expansion::ChatAdapter> make_chat_adapter(const std::string& spec, const ChatSpecOptions& options) {
  if (spec == "stub:expander") return std::make_unique<expansion::RuleBasedExpander>();
  if (starts_with(spec, "stub:echo:")) return std::make_unique<expansion::EchoChatAdapter>(spec.substr(10));
  if (starts_with(spec, "stub:scripted:")) {
    const std::filesystem::path file = spec.substr(14);
    std::ifstream in(file);
    if (!in) fail(Errc::NotFound, "scripted replies " + file.string() + " not found");
    try {
      auto replies = json::parse(in).get<std::vector<std::string>>();
      if (replies.empty()) fail(Errc::InvalidArgument, "scripted replies file is empty");
      return std::make_unique<expansion::ScriptedChatAdapter>(std::move(replies));
    } catch (const json::exception& e) {
      fail(Errc::ParseError, file.string() + ": " + e.what());
    }
  }
  if (is_url(spec)) {
    expansion::HttpChatOptions o;
    const auto hash = spec.find('#');
    o.url = spec.substr(0, hash);
    if (hash != std::string::npos) o.model = spec.substr(hash + 1);
    o.timeout = options.timeout;
    o.log_path = options.log_path;
    return std::make_unique<expansion::HttpChatAdapter>(std::move(o));
  }
  fail(Errc::InvalidArgument, "unknown chat adapter spec '" + spec + "'");
}

std::unique_ptr<selftrain::SegmenterAdapter> make_segmenter(const std::string& spec, std::chrono::milliseconds timeout) {
  if (starts_with(spec, "subprocess:")) {
    const auto command = spec.substr(11);
    if (command.empty()) fail(Errc::InvalidArgument, "subprocess segmenter needs a command");
    return std::make_unique<selftrain::SubprocessSegmenter>(command, timeout);
  }
  if (is_url(spec)) return std::make_unique<selftrain::HttpSegmenter>(spec, timeout);
  fail(Errc::InvalidArgument, "unknown segmenter spec '" + spec + "'");
}

}  // namespace fundus::service
