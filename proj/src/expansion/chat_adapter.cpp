#include "fundus/expansion/chat_adapter.hpp"

#include <httplib.h>

#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>

#include "fundus/core/category.hpp"
#include "fundus/core/error.hpp"
#include "fundus/core/rng.hpp"
#include "fundus/core/vocabulary.hpp"

namespace fundus::expansion {

namespace {

std::string image_url(const std::string& ref) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(ref, ec)) return ref;
  std::ifstream in(ref, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto ext = to_lower(std::filesystem::path(ref).extension().string());
  const std::string mime = ext == ".png" ? "image/png" : ext == ".jpg" || ext == ".jpeg" ? "image/jpeg" : "application/octet-stream";
  return "data:" + mime + ";base64," + httplib::detail::base64_encode(bytes);
}

}  // namespace

json to_json(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    if (m.images.empty()) {
      messages.push_back({{"role", m.role}, {"content", m.content}});
      continue;
    }
    json parts = json::array();
    for (const auto& img : m.images) parts.push_back({{"type", "image_url"}, {"image_url", {{"url", image_url(img)}}}});
    parts.push_back({{"type", "text"}, {"text", m.content}});
    messages.push_back({{"role", m.role}, {"content", parts}});
  }
  json j = {{"messages", messages}, {"temperature", request.temperature}, {"max_tokens", request.max_tokens}};
  if (request.seed) j["seed"] = *request.seed;
  return j;
}

HttpChatAdapter::HttpChatAdapter(HttpChatOptions options) : options_(std::move(options)) {
  const auto scheme = options_.url.find("://");
  if (scheme == std::string::npos) fail(Errc::InvalidArgument, "chat endpoint must be an http(s) URL: " + options_.url);
  const auto slash = options_.url.find('/', scheme + 3);
  origin_ = options_.url.substr(0, slash);
  path_ = slash == std::string::npos ? "" : options_.url.substr(slash);
  while (!path_.empty() && path_.back() == '/') path_.pop_back();
  if (path_.empty()) path_ = "/v1/chat/completions";
  else if (path_.find("/chat/completions") == std::string::npos) path_ += "/chat/completions";
}

void HttpChatAdapter::log(const json& entry) {
  if (!options_.log_path) return;
  std::lock_guard lock(log_mutex_);
  std::ofstream out(*options_.log_path, std::ios::app);
  out << entry.dump() << '\n';
}

std::string HttpChatAdapter::complete(const ChatRequest& request) {
  json body = to_json(request);
  body["model"] = options_.model;

  httplib::Client client(origin_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  bool has_key = false;
  if (const char* key = std::getenv(options_.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
    has_key = true;
  }

  json entry = {{"url", origin_ + path_}, {"request", body}};
  if (has_key) entry["headers"] = {{"Authorization", "Bearer [redacted]"}};
  auto res = client.Post(path_, headers, body.dump(), "application/json");
  if (!res) {
    entry["error"] = httplib::to_string(res.error());
    log(entry);
    fail(Errc::AdapterFailure, "chat endpoint " + origin_ + ": " + httplib::to_string(res.error()));
  }
  entry["status"] = res->status;
  entry["response"] = res->body;
  log(entry);
  if (res->status != 200) fail(Errc::AdapterFailure, "chat endpoint returned HTTP " + std::to_string(res->status));
  try {
    const auto reply = json::parse(res->body);
    const auto& content = reply.at("choices").at(0).at("message").at("content");
    return content.is_null() ? std::string() : content.get<std::string>();
  } catch (const json::exception& e) {
    fail(Errc::AdapterFailure, std::string("chat endpoint sent an unexpected body: ") + e.what());
  }
}

ScriptedChatAdapter::ScriptedChatAdapter(std::vector<std::string> replies, bool sampling)
    : replies_(replies.begin(), replies.end()), sampling_(sampling) {
  if (replies_.empty()) fail(Errc::InvalidArgument, "scripted adapter needs at least one reply");
}

std::string ScriptedChatAdapter::complete(const ChatRequest& request) {
  std::lock_guard lock(mutex_);
  requests_.push_back(request);
  auto reply = replies_.front();
  if (replies_.size() > 1) replies_.pop_front();
  return reply;
}

std::vector<ChatRequest> ScriptedChatAdapter::requests() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

std::string RuleBasedExpander::complete(const ChatRequest& request) {
  std::string user;
  for (const auto& m : request.messages) {
    if (m.role == "user") user = m.content;
  }
  SeededRng rng(request.seed.value_or(0));
  auto pick = [&](std::initializer_list<const char*> options) {
    return std::string(options.begin()[rng.below(options.size())]);
  };

  const bool cite = user.find("<box>[x_min") != std::string::npos;
  static const std::regex region_line(R"(^(OD|OC|EX|CWS|MA): (\[\d+, \d+, \d+, \d+\])$)");
  std::string findings = "none";
  std::vector<std::pair<std::string, std::string>> regions;
  std::istringstream lines(user);
  for (std::string line; std::getline(lines, line);) {
    std::smatch m;
    if (std::regex_match(line, m, region_line)) {
      regions.emplace_back(std::string(display_name(*parse_category(m[1].str()))), m[2].str());
    } else if (line.rfind("Annotated findings: ", 0) == 0) {
      findings = line.substr(20);
    }
  }

  std::string text = pick({"The fundus photograph shows", "On this fundus image we observe", "Examination of the fundus reveals",
                           "This color fundus image demonstrates", "The retinal photograph displays"});
  if (regions.empty()) {
    text += " no annotated focal regions.";
  } else {
    const auto verb = pick({"located at", "seen at", "visible at", "found at"});
    for (std::size_t i = 0; i < regions.size(); ++i) {
      text += i == 0 ? " " : (i + 1 == regions.size() ? " and " : ", ");
      text += regions[i].first;
      text += cite ? " " + verb + " <box>" + regions[i].second + "</box>" : "";
    }
    text += ".";
  }
  if (findings != "none") {
    text += " " + pick({"These features are suggestive of", "The appearance raises suspicion of", "The pattern is consistent with"}) +
            " " + findings + ".";
  } else {
    text += " " + pick({"No features of retinal disease are evident.", "The findings fall within normal limits.",
                        "No pathological change is apparent."});
  }
  text += " " + pick({"Clinical correlation is advised.", "Follow-up examination is recommended.",
                      "Further assessment may clarify the findings.", "Comparison with prior images would help."});
  return text;
}

}  // namespace fundus::expansion
