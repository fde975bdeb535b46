#pragma once

#include <cstddef>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "memhub/embedding.hpp"

namespace memhub {

struct ChatMessage {
  std::string role;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 1.0;
};

struct ChatReply {
  std::string content;
};

// Chat completion backend. Implementations must be safe to call from
// concurrent sampling paths. Failures throw Error(kModelUnavailable).
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual ChatReply complete(const ChatRequest& request) = 0;
};

// Stable digest of a message list: FNV-1a 64 over the compact JSON array
// [{"role":..,"content":..},...], rendered as 16 lowercase hex digits.
std::string request_digest(const std::vector<ChatMessage>& messages);

// Wire forms shared by the HTTP clients and the scripted-table loader.
std::string encode_chat_request(const ChatRequest& request);
ChatRequest decode_chat_request(const std::string& body);
std::string encode_chat_reply(const ChatReply& reply);
ChatReply decode_chat_reply(const std::string& body);
std::string encode_embed_request(const std::vector<std::string>& texts);
std::vector<std::string> decode_embed_request(const std::string& body);
std::string encode_embed_reply(const std::vector<DenseVector>& vectors);
std::vector<DenseVector> decode_embed_reply(const std::string& body);

// Canned replies keyed by request digest, plus an ordered fallback list that
// is consumed once a digest misses.
//
// File form: {"replies": {"<digest>": "<content>", ...}, "fallback": ["...", ...]}
class ScriptedChat final : public ChatClient {
 public:
  ScriptedChat(std::map<std::string, std::string> replies, std::vector<std::string> fallback);

  static std::unique_ptr<ScriptedChat> from_file(const std::filesystem::path& path);
  static std::unique_ptr<ScriptedChat> from_json(const std::string& text);

  ChatReply complete(const ChatRequest& request) override;

  std::size_t fallback_remaining() const;

 private:
  std::map<std::string, std::string> replies_;
  mutable std::mutex mu_;
  std::deque<std::string> fallback_;
};

// In-process scripted backend backed by a callable.
class FunctionChat final : public ChatClient {
 public:
  using Fn = std::function<std::string(const ChatRequest&)>;
  explicit FunctionChat(Fn fn) : fn_(std::move(fn)) {}
  ChatReply complete(const ChatRequest& request) override { return {fn_(request)}; }

 private:
  Fn fn_;
};

// Forwards to an inner client and keeps every request for inspection.
class RecordingChat final : public ChatClient {
 public:
  explicit RecordingChat(ChatClient& inner) : inner_(inner) {}
  ChatReply complete(const ChatRequest& request) override;

  std::vector<ChatRequest> requests() const;
  std::size_t calls() const;

 private:
  ChatClient& inner_;
  mutable std::mutex mu_;
  std::vector<ChatRequest> requests_;
};

// HTTP-JSON clients for live mode. `url` is "http://host:port/path".
class HttpChatClient final : public ChatClient {
 public:
  explicit HttpChatClient(std::string url, int timeout_s = 300);
  ChatReply complete(const ChatRequest& request) override;

 private:
  std::string url_;
  int timeout_s_;
};

class HttpEmbedder final : public Embedder {
 public:
  HttpEmbedder(std::string url, std::string name, std::size_t dimension, int timeout_s = 120);

  std::string name() const override { return name_; }
  std::size_t dimension() const override { return dimension_; }
  std::vector<DenseVector> embed(std::span<const std::string> texts) override;

 private:
  std::string url_;
  std::string name_;
  std::size_t dimension_;
  int timeout_s_;
};

// Summarizer that asks a chat model to describe a code block.
class ChatSummarizer final : public Summarizer {
 public:
  ChatSummarizer(ChatClient& chat, std::string model) : chat_(chat), model_(std::move(model)) {}
  std::string summarize(const std::string& code) override;

 private:
  ChatClient& chat_;
  std::string model_;
};

}  // namespace memhub
