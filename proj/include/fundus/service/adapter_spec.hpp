#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "fundus/expansion/chat_adapter.hpp"
#include "fundus/selftrain/segmenter.hpp"

namespace fundus::service {

struct ChatSpecOptions {
  std::chrono::milliseconds timeout{60000};
  std::optional<std::filesystem::path> log_path;
};

/// Chat adapter specs:
///   stub:expander             offline rule-based expander
///   stub:echo:<text>          always replies <text>
///   stub:scripted:<file>      replies from a JSON array, last one repeats
///   http(s)://host[/path][#model]   OpenAI-compatible chat endpoint; the
///                                   token comes from FUNDUS_API_KEY
/// Throws InvalidArgument for anything else.
std::unique_ptr<expansion::ChatAdapter> make_chat_adapter(const std::string& spec, const ChatSpecOptions& options = {});

/// Segmenter specs: subprocess:<command> or an http(s) URL.
std::unique_ptr<selftrain::SegmenterAdapter> make_segmenter(const std::string& spec, std::chrono::milliseconds timeout);

}  // namespace fundus::service
