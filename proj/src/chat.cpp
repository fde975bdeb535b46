#include "memhub/chat.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "memhub/error.hpp"

namespace memhub {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

json parse_or_throw(const std::string& body, const char* what) {
  try {
    return json::parse(body);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kModelUnavailable, std::string("malformed ") + what + ": " + e.what());
  }
}

ordered_json messages_json(const std::vector<ChatMessage>& messages) {
  ordered_json arr = ordered_json::array();
  for (const auto& m : messages) {
    ordered_json o;
    o["role"] = m.role;
    o["content"] = m.content;
    arr.push_back(std::move(o));
  }
  return arr;
}

}  // namespace

std::string request_digest(const std::vector<ChatMessage>& messages) {
  return hex64(fnv1a64(messages_json(messages).dump()));
}

std::string encode_chat_request(const ChatRequest& request) {
  ordered_json o;
  o["model"] = request.model;
  o["messages"] = messages_json(request.messages);
  o["temperature"] = request.temperature;
  return o.dump();
}

ChatRequest decode_chat_request(const std::string& body) {
  const json j = parse_or_throw(body, "chat request");
  try {
    ChatRequest r;
    r.model = j.at("model").get<std::string>();
    for (const auto& m : j.at("messages")) {
      r.messages.push_back({m.at("role").get<std::string>(), m.at("content").get<std::string>()});
    }
    r.temperature = j.value("temperature", 1.0);
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kModelUnavailable, std::string("malformed chat request: ") + e.what());
  }
}

std::string encode_chat_reply(const ChatReply& reply) {
  ordered_json o;
  o["content"] = reply.content;
  return o.dump();
}

ChatReply decode_chat_reply(const std::string& body) {
  const json j = parse_or_throw(body, "chat reply");
  if (!j.is_object() || !j.contains("content") || !j["content"].is_string()) {
    throw Error(ErrorCode::kModelUnavailable, "chat reply lacks a string 'content'");
  }
  return {j["content"].get<std::string>()};
}

std::string encode_embed_request(const std::vector<std::string>& texts) {
  ordered_json o;
  o["texts"] = texts;
  return o.dump();
}

std::vector<std::string> decode_embed_request(const std::string& body) {
  const json j = parse_or_throw(body, "embed request");
  try {
    return j.at("texts").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kModelUnavailable, std::string("malformed embed request: ") + e.what());
  }
}

std::string encode_embed_reply(const std::vector<DenseVector>& vectors) {
  ordered_json o;
  o["vectors"] = vectors;
  return o.dump();
}

std::vector<DenseVector> decode_embed_reply(const std::string& body) {
  const json j = parse_or_throw(body, "embed reply");
  try {
    return j.at("vectors").get<std::vector<DenseVector>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kModelUnavailable, std::string("malformed embed reply: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

ScriptedChat::ScriptedChat(std::map<std::string, std::string> replies, std::vector<std::string> fallback)
    : replies_(std::move(replies)), fallback_(fallback.begin(), fallback.end()) {}

std::unique_ptr<ScriptedChat> ScriptedChat::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigError, std::string("scripted backend file: ") + e.what());
  }
  std::map<std::string, std::string> replies;
  std::vector<std::string> fallback;
  try {
    if (j.contains("replies")) replies = j.at("replies").get<std::map<std::string, std::string>>();
    if (j.contains("fallback")) fallback = j.at("fallback").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigError, std::string("scripted backend file: ") + e.what());
  }
  return std::make_unique<ScriptedChat>(std::move(replies), std::move(fallback));
}

std::unique_ptr<ScriptedChat> ScriptedChat::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kConfigError, "cannot open scripted backend file " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

ChatReply ScriptedChat::complete(const ChatRequest& request) {
  const auto digest = request_digest(request.messages);
  if (auto it = replies_.find(digest); it != replies_.end()) {
    return {it->second};
  }
  std::lock_guard lock(mu_);
  if (fallback_.empty()) {
    throw Error(ErrorCode::kModelUnavailable, "no scripted reply for digest " + digest);
  }
  std::string reply = std::move(fallback_.front());
  fallback_.pop_front();
  return {reply};
}

std::size_t ScriptedChat::fallback_remaining() const {
  std::lock_guard lock(mu_);
  return fallback_.size();
}

ChatReply RecordingChat::complete(const ChatRequest& request) {
  {
    std::lock_guard lock(mu_);
    requests_.push_back(request);
  }
  return inner_.complete(request);
}

std::vector<ChatRequest> RecordingChat::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

std::size_t RecordingChat::calls() const {
  std::lock_guard lock(mu_);
  return requests_.size();
}

std::string ChatSummarizer::summarize(const std::string& code) {
  ChatRequest req;
  req.model = model_;
  req.temperature = 0.2;
  req.messages = {
      {"system", "Summarize the purpose of the following code in two sentences. Name the main "
                 "functions and what they return."},
      {"user", code}};
  return chat_.complete(req).content;
}

}  // namespace memhub
