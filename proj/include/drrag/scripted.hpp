#pragma once

#include <deque>
#include <fstream>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "drrag/backends.hpp"
#include "drrag/errors.hpp"

namespace drrag {

// A deterministic canned backend. Model replies are keyed by request
// fingerprint; a pattern ending in '*' matches any fingerprint with that
// prefix. Exact entries win over patterns; patterns match in insertion
// order. Each entry holds a reply queue so retries can observe different
// replies; an exhausted queue repeats its last reply unless repeat_last is
// disabled, in which case the miss is a hard error.
struct ScriptReply {
  std::string content;
  Usage usage;
  bool refusal = false;
};

class Script {
 public:
  void add_model(const std::string& pattern, std::vector<ScriptReply> replies, bool repeat_last = true) {
    ModelEntry e;
    e.replies.assign(replies.begin(), replies.end());
    e.repeat_last = repeat_last;
    if (!pattern.empty() && pattern.back() == '*') {
      prefix_order_.push_back(pattern.substr(0, pattern.size() - 1));
      prefix_entries_[prefix_order_.back()] = std::move(e);
    } else {
      exact_entries_[pattern] = std::move(e);
    }
  }
  void add_model(const std::string& pattern, const std::string& content, Usage usage = {0, 0}) {
    add_model(pattern, std::vector<ScriptReply>{{content, usage, false}});
  }

  void add_retrieval(const std::string& query, std::vector<Document> docs) {
    retrieval_[query] = std::move(docs);
  }
  void set_default_docs(std::vector<Document> docs) {
    default_docs_ = std::move(docs);
    has_default_docs_ = true;
  }

  std::uint64_t seed = 0;

  // JSON form:
  // {"seed": 0,
  //  "model": [{"fingerprint": "...", "replies": [{"content": "...",
  //             "prompt_tokens": 0, "completion_tokens": 0}], "repeat_last": true}],
  //  "retrieval": [{"query": "...", "docs": [...]}],
  //  "default_docs": [...]}
  static Script from_json(const json& j);
  json to_json() const;
  static Script load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open script file: " + path);
    json j;
    try {
      in >> j;
    } catch (const json::parse_error& e) {
      throw ParseError("script file " + path + ": " + e.what());
    }
    return from_json(j);
  }

 private:
  struct ModelEntry {
    std::deque<ScriptReply> replies;
    bool repeat_last = true;
  };

  std::unordered_map<std::string, ModelEntry> exact_entries_;
  std::unordered_map<std::string, ModelEntry> prefix_entries_;
  std::vector<std::string> prefix_order_;
  std::unordered_map<std::string, std::vector<Document>> retrieval_;
  std::vector<Document> default_docs_;
  bool has_default_docs_ = false;

  friend class ScriptedModel;
  friend class ScriptedRetriever;
};

inline Script Script::from_json(const json& j) {
  Script s;
  if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("model")) {
    for (const auto& e : j.at("model")) {
      std::vector<ScriptReply> replies;
      for (const auto& r : e.at("replies")) {
        ScriptReply sr;
        sr.content = r.at("content").get<std::string>();
        if (r.contains("prompt_tokens")) sr.usage.prompt_tokens = r.at("prompt_tokens").get<std::uint64_t>();
        if (r.contains("completion_tokens"))
          sr.usage.completion_tokens = r.at("completion_tokens").get<std::uint64_t>();
        if (r.contains("refusal")) sr.refusal = r.at("refusal").get<bool>();
        replies.push_back(std::move(sr));
      }
      s.add_model(e.at("fingerprint").get<std::string>(), std::move(replies),
                  e.contains("repeat_last") ? e.at("repeat_last").get<bool>() : true);
    }
  }
  auto parse_docs = [](const json& arr) {
    std::vector<Document> docs;
    for (const auto& d : arr) {
      Document doc;
      doc.doc_id = d.at("doc_id").get<std::string>();
      doc.title = d.value("title", std::string{});
      doc.text = d.value("text", std::string{});
      doc.score = d.value("score", 0.0);
      docs.push_back(std::move(doc));
    }
    return docs;
  };
  if (j.contains("retrieval"))
    for (const auto& e : j.at("retrieval"))
      s.add_retrieval(e.at("query").get<std::string>(), parse_docs(e.at("docs")));
  if (j.contains("default_docs")) s.set_default_docs(parse_docs(j.at("default_docs")));
  return s;
}

inline json Script::to_json() const {
  auto docs_json = [](const std::vector<Document>& docs) {
    json arr = json::array();
    for (const auto& d : docs)
      arr.push_back({{"doc_id", d.doc_id}, {"title", d.title}, {"text", d.text}, {"score", d.score}});
    return arr;
  };
  auto entry_json = [](const std::string& fingerprint, const ModelEntry& e) {
    json replies = json::array();
    for (const auto& r : e.replies)
      replies.push_back({{"content", r.content},
                         {"prompt_tokens", r.usage.prompt_tokens},
                         {"completion_tokens", r.usage.completion_tokens},
                         {"refusal", r.refusal}});
    return json{{"fingerprint", fingerprint}, {"replies", std::move(replies)}, {"repeat_last", e.repeat_last}};
  };

  json model = json::array();
  for (const auto& [fp, e] : exact_entries_) model.push_back(entry_json(fp, e));
  for (const auto& prefix : prefix_order_) model.push_back(entry_json(prefix + "*", prefix_entries_.at(prefix)));

  json retrieval = json::array();
  for (const auto& [query, docs] : retrieval_)
    retrieval.push_back({{"query", query}, {"docs", docs_json(docs)}});

  json out{{"seed", seed}, {"model", std::move(model)}, {"retrieval", std::move(retrieval)}};
  if (has_default_docs_) out["default_docs"] = docs_json(default_docs_);
  return out;
}

struct CapturedCall {
  std::string fingerprint;
  std::string prompt_text;  // all message contents joined, for capture assertions
  Usage usage;
};

class ScriptedModel : public ModelClient {
 public:
  explicit ScriptedModel(Script script) : script_(std::move(script)) {}

  ModelReply chat_complete(const ModelRequest& req) override {
    std::lock_guard<std::mutex> lock(mu_);
    Script::ModelEntry* entry = nullptr;
    auto it = script_.exact_entries_.find(req.fingerprint);
    if (it != script_.exact_entries_.end()) {
      entry = &it->second;
    } else {
      for (const auto& prefix : script_.prefix_order_) {
        if (req.fingerprint.rfind(prefix, 0) == 0) {
          entry = &script_.prefix_entries_[prefix];
          break;
        }
      }
    }
    if (!entry || entry->replies.empty())
      throw ScriptMissError("scripted model has no reply for fingerprint \"" + req.fingerprint + "\"");

    ScriptReply reply = entry->replies.front();
    if (entry->replies.size() > 1 || !entry->repeat_last) entry->replies.pop_front();

    std::string prompt;
    for (const auto& m : req.messages) {
      prompt += m.content;
      prompt += "\n";
    }
    calls_.push_back({req.fingerprint, prompt, reply.usage});
    return ModelReply{reply.content, reply.usage, reply.refusal};
  }

  std::vector<CapturedCall> calls() const {
    std::lock_guard<std::mutex> lock(mu_);
    return calls_;
  }
  std::uint64_t total_usage() const {
    std::lock_guard<std::mutex> lock(mu_);
    std::uint64_t n = 0;
    for (const auto& c : calls_) n += c.usage.total();
    return n;
  }
  void clear_calls() {
    std::lock_guard<std::mutex> lock(mu_);
    calls_.clear();
  }

 private:
  Script script_;
  mutable std::mutex mu_;
  std::vector<CapturedCall> calls_;
};

class ScriptedRetriever : public Retriever {
 public:
  explicit ScriptedRetriever(Script script) : script_(std::move(script)) {}
  ScriptedRetriever() : script_(Script{}) {}

  RetrievalReply retrieve(const RetrievalRequest& req) override {
    std::lock_guard<std::mutex> lock(mu_);
    requests_.push_back(req);
    RetrievalReply reply;
    auto it = script_.retrieval_.find(req.query);
    if (it != script_.retrieval_.end()) reply.documents = it->second;
    else if (script_.has_default_docs_) reply.documents = script_.default_docs_;
    enforce_retrieval_invariants(reply, req.top_k);
    return reply;
  }

  std::vector<RetrievalRequest> requests() const {
    std::lock_guard<std::mutex> lock(mu_);
    return requests_;
  }
  std::size_t call_count() const {
    std::lock_guard<std::mutex> lock(mu_);
    return requests_.size();
  }

 private:
  Script script_;
  mutable std::mutex mu_;
  std::vector<RetrievalRequest> requests_;
};

}  // namespace drrag
