#pragma once

#include <chrono>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "drrag/backends.hpp"
#include "drrag/errors.hpp"

namespace drrag {

// Wire body for an OpenAI-compatible chat completion. Kept as a free
// function so request serialization is testable without a socket.
inline json build_chat_request_body(const ModelRequest& req) {
  json messages = json::array();
  for (const auto& m : req.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  return json{{"model", req.model},
              {"messages", std::move(messages)},
              {"temperature", req.temperature},
              {"max_tokens", req.max_tokens}};
}

inline ModelReply parse_chat_reply(const json& body) {
  ModelReply reply;
  try {
    const json& choices = body.at("choices");
    if (!choices.is_array() || choices.empty())
      throw ParseError("chat reply: \"choices\" must be a non-empty array");
    reply.content = choices.at(0).at("message").at("content").get<std::string>();
    if (body.contains("usage")) {
      const json& usage = body.at("usage");
      reply.usage.prompt_tokens = usage.value("prompt_tokens", std::uint64_t{0});
      reply.usage.completion_tokens = usage.value("completion_tokens", std::uint64_t{0});
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("chat reply: ") + e.what());
  }
  if (reply.content.empty()) reply.refusal = true;
  return reply;
}

inline RetrievalReply parse_search_reply(const json& body, std::size_t top_k) {
  RetrievalReply reply;
  try {
    for (const auto& r : body.at("results")) {
      Document d;
      d.doc_id = r.at("doc_id").get<std::string>();
      d.title = r.value("title", std::string{});
      d.text = r.value("text", std::string{});
      d.score = r.value("score", 0.0);
      reply.documents.push_back(std::move(d));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("search reply: ") + e.what());
  }
  enforce_retrieval_invariants(reply, top_k);
  return reply;
}

namespace detail {

inline std::string body_excerpt(const std::string& body) {
  return body.size() <= 200 ? body : body.substr(0, 200) + "...";
}

// POST with bounded retries on transport failures. HTTP error statuses are
// not retried; the server said no.
inline std::string post_json(httplib::Client& client, const std::string& path,
                             const httplib::Headers& headers, const std::string& body,
                             int max_attempts, std::chrono::milliseconds backoff) {
  std::string last_error;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    auto res = client.Post(path, headers, body, "application/json");
    if (res) {
      if (res->status >= 400)
        throw BackendError("HTTP " + std::to_string(res->status) + " from " + path + ": " +
                           body_excerpt(res->body));
      return res->body;
    }
    last_error = httplib::to_string(res.error());
    if (attempt < max_attempts) std::this_thread::sleep_for(backoff * attempt);
  }
  throw BackendError("request to " + path + " failed after " + std::to_string(max_attempts) +
                     " attempts: " + last_error);
}

}  // namespace detail

// OpenAI-compatible chat completions client (POST {base}/v1/chat/completions).
class OpenAiClient : public ModelClient {
 public:
  explicit OpenAiClient(std::string base_url, std::string api_key = "", std::string default_model = "",
                        int max_attempts = 3, std::chrono::milliseconds backoff = std::chrono::milliseconds(250))
      : base_url_(std::move(base_url)), api_key_(std::move(api_key)),
        default_model_(std::move(default_model)), max_attempts_(max_attempts), backoff_(backoff) {}

  ModelReply chat_complete(const ModelRequest& req) override {
    ModelRequest effective = req;
    if (effective.model.empty()) effective.model = default_model_;

    httplib::Client client(base_url_);
    client.set_connection_timeout(10);
    client.set_read_timeout(120);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    const std::string body = detail::post_json(client, "/v1/chat/completions", headers,
                                               build_chat_request_body(effective).dump(),
                                               max_attempts_, backoff_);
    json parsed;
    try {
      parsed = json::parse(body);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("chat reply is not valid JSON: ") + e.what());
    }
    return parse_chat_reply(parsed);
  }

 private:
  std::string base_url_;
  std::string api_key_;
  std::string default_model_;
  int max_attempts_;
  std::chrono::milliseconds backoff_;
};

// Minimal JSON-over-HTTP search client (POST {base}/search).
class HttpRetriever : public Retriever {
 public:
  explicit HttpRetriever(std::string base_url, int max_attempts = 3,
                         std::chrono::milliseconds backoff = std::chrono::milliseconds(250))
      : base_url_(std::move(base_url)), max_attempts_(max_attempts), backoff_(backoff) {}

  RetrievalReply retrieve(const RetrievalRequest& req) override {
    httplib::Client client(base_url_);
    client.set_connection_timeout(10);
    client.set_read_timeout(60);
    const json body{{"query", req.query}, {"top_k", req.top_k}};
    const std::string reply = detail::post_json(client, "/search", {}, body.dump(),
                                                max_attempts_, backoff_);
    json parsed;
    try {
      parsed = json::parse(reply);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("search reply is not valid JSON: ") + e.what());
    }
    return parse_search_reply(parsed, req.top_k);
  }

 private:
  std::string base_url_;
  int max_attempts_;
  std::chrono::milliseconds backoff_;
};

}  // namespace drrag
