#pragma once

#include <algorithm>
#include <fstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "drrag/backends.hpp"
#include "drrag/errors.hpp"
#include "drrag/metrics.hpp"

namespace drrag {

// Reference retriever over a small bundled corpus: plain keyword overlap,
// deterministic tie-breaking by doc_id. Good enough to exercise the live
// retrieval path end to end without an index server.
class KeywordRetriever : public Retriever {
 public:
  explicit KeywordRetriever(std::vector<Document> corpus) : corpus_(std::move(corpus)) {
    for (const auto& d : corpus_) {
      std::unordered_set<std::string> toks;
      for (const auto& t : overlap_tokens(d.title + " " + d.text)) toks.insert(t);
      doc_tokens_.push_back(std::move(toks));
    }
  }

  static KeywordRetriever from_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open corpus: " + path);
    std::vector<Document> corpus;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::parse_error& e) {
        throw ParseError(path + " line " + std::to_string(lineno) + ": " + e.what());
      }
      Document d;
      d.doc_id = j.at("doc_id").get<std::string>();
      d.title = j.value("title", std::string{});
      d.text = j.value("text", std::string{});
      corpus.push_back(std::move(d));
    }
    return KeywordRetriever(std::move(corpus));
  }

  RetrievalReply retrieve(const RetrievalRequest& req) override {
    const auto query_tokens = overlap_tokens(req.query);
    RetrievalReply reply;
    if (query_tokens.empty() || req.top_k == 0) return reply;

    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t i = 0; i < corpus_.size(); ++i) {
      std::size_t hits = 0;
      for (const auto& t : query_tokens)
        if (doc_tokens_[i].count(t)) ++hits;
      if (hits == 0) continue;
      scored.emplace_back(static_cast<double>(hits) / static_cast<double>(query_tokens.size()), i);
    }
    std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return corpus_[a.second].doc_id < corpus_[b.second].doc_id;
    });
    if (scored.size() > req.top_k) scored.resize(req.top_k);
    for (const auto& [score, i] : scored) {
      Document d = corpus_[i];
      d.score = score;
      reply.documents.push_back(std::move(d));
    }
    return reply;
  }

  std::size_t size() const { return corpus_.size(); }

 private:
  std::vector<Document> corpus_;
  std::vector<std::unordered_set<std::string>> doc_tokens_;
};

}  // namespace drrag
