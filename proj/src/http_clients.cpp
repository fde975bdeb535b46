#include <cmath>

#include <httplib.h>

#include "memhub/chat.hpp"
#include "memhub/error.hpp"

namespace memhub {

namespace {

struct Endpoint {
  std::string base;  // scheme://host:port
  std::string path;
};

Endpoint split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) {
    throw Error(ErrorCode::kConfigError, "endpoint '" + url + "' lacks a scheme");
  }
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

std::string post_json(const std::string& url, const std::string& body, int timeout_s) {
  const auto ep = split_url(url);
  httplib::Client client(ep.base);
  client.set_connection_timeout(10, 0);
  client.set_read_timeout(timeout_s, 0);
  client.set_write_timeout(timeout_s, 0);
  auto res = client.Post(ep.path, body, "application/json");
  if (!res) {
    throw Error(ErrorCode::kModelUnavailable,
                "POST " + url + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::kModelUnavailable,
                "POST " + url + " returned HTTP " + std::to_string(res->status));
  }
  return res->body;
}

}  // namespace

HttpChatClient::HttpChatClient(std::string url, int timeout_s)
    : url_(std::move(url)), timeout_s_(timeout_s) {
  split_url(url_);
}

ChatReply HttpChatClient::complete(const ChatRequest& request) {
  return decode_chat_reply(post_json(url_, encode_chat_request(request), timeout_s_));
}

HttpEmbedder::HttpEmbedder(std::string url, std::string name, std::size_t dimension, int timeout_s)
    : url_(std::move(url)), name_(std::move(name)), dimension_(dimension), timeout_s_(timeout_s) {
  split_url(url_);
}

std::vector<DenseVector> HttpEmbedder::embed(std::span<const std::string> texts) {
  const std::vector<std::string> batch(texts.begin(), texts.end());
  auto vectors = decode_embed_reply(post_json(url_, encode_embed_request(batch), timeout_s_));
  if (vectors.size() != texts.size()) {
    throw Error(ErrorCode::kModelUnavailable, "embedder returned " + std::to_string(vectors.size()) +
                                                  " vectors for " + std::to_string(texts.size()) +
                                                  " texts");
  }
  for (const auto& v : vectors) {
    if (v.size() != dimension_) {
      throw Error(ErrorCode::kDimensionMismatch, "embedder returned dimension " +
                                                     std::to_string(v.size()) + ", expected " +
                                                     std::to_string(dimension_));
    }
    if (std::abs(l2_norm(v) - 1.0) > 1e-6) {
      throw Error(ErrorCode::kModelUnavailable, "embedder returned a vector that is not unit norm");
    }
  }
  return vectors;
}

}  // namespace memhub
