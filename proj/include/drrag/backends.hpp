#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "drrag/errors.hpp"
#include "drrag/trajectory.hpp"

namespace drrag {

struct Usage {
  std::uint64_t prompt_tokens = 0;
  std::uint64_t completion_tokens = 0;

  std::uint64_t total() const { return prompt_tokens + completion_tokens; }

  friend bool operator==(const Usage&, const Usage&) = default;
};

struct ChatMessage {
  std::string role;  // "system" | "user" | "assistant"
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ModelRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  std::uint64_t max_tokens = 1024;
  // Stable identity for scripted replay: template id plus salient variables,
  // never raw prompt bytes.
  std::string fingerprint;
};

struct ModelReply {
  std::string content;
  Usage usage;
  bool refusal = false;  // only an explicit refusal may leave content empty
};

struct RetrievalRequest {
  std::string query;
  std::size_t top_k = 5;
};

struct RetrievalReply {
  std::vector<Document> documents;  // length <= top_k, scores non-increasing
};

class ModelClient {
 public:
  virtual ~ModelClient() = default;
  virtual ModelReply chat_complete(const ModelRequest& req) = 0;
};

// The diagnosis judge is an ordinary chat model endpoint.
using JudgeHandle = ModelClient;

class Retriever {
 public:
  virtual ~Retriever() = default;
  virtual RetrievalReply retrieve(const RetrievalRequest& req) = 0;
};

inline void enforce_retrieval_invariants(RetrievalReply& reply, std::size_t top_k) {
  std::stable_sort(reply.documents.begin(), reply.documents.end(),
                   [](const Document& a, const Document& b) { return a.score > b.score; });
  if (reply.documents.size() > top_k) reply.documents.resize(top_k);
}

}  // namespace drrag
