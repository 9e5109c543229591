#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "drrag/errors.hpp"

namespace drrag {

using json = nlohmann::json;

enum class ActionKind { Reason, Search, Information, Answer };

inline const char* to_string(ActionKind k) {
  switch (k) {
    case ActionKind::Reason: return "reason";
    case ActionKind::Search: return "search";
    case ActionKind::Information: return "information";
    case ActionKind::Answer: return "answer";
  }
  return "unknown";
}

inline ActionKind action_kind_from_string(const std::string& s) {
  if (s == "reason") return ActionKind::Reason;
  if (s == "search") return ActionKind::Search;
  if (s == "information") return ActionKind::Information;
  if (s == "answer") return ActionKind::Answer;
  throw ParseError("unknown action kind: \"" + s + "\"");
}

struct Document {
  std::string doc_id;
  std::string title;
  std::string text;
  double score = 0.0;

  friend bool operator==(const Document&, const Document&) = default;
};

// One atomic trajectory step. The payload field in use depends on kind:
// text for reason/answer, query for search, docs for information.
struct Action {
  ActionKind kind = ActionKind::Reason;
  std::string text;
  std::string query;
  std::vector<Document> docs;
  std::uint64_t tokens = 0;

  static Action reason(std::string text, std::uint64_t tokens = 0) {
    Action a;
    a.kind = ActionKind::Reason;
    a.text = std::move(text);
    a.tokens = tokens;
    return a;
  }
  static Action search(std::string query, std::uint64_t tokens = 0) {
    Action a;
    a.kind = ActionKind::Search;
    a.query = std::move(query);
    a.tokens = tokens;
    return a;
  }
  static Action information(std::vector<Document> docs, std::uint64_t tokens = 0) {
    Action a;
    a.kind = ActionKind::Information;
    a.docs = std::move(docs);
    a.tokens = tokens;
    return a;
  }
  static Action answer(std::string text, std::uint64_t tokens = 0) {
    Action a;
    a.kind = ActionKind::Answer;
    a.text = std::move(text);
    a.tokens = tokens;
    return a;
  }

  friend bool operator==(const Action&, const Action&) = default;
};

inline std::size_t whitespace_token_count(const std::string& s) {
  std::istringstream in(s);
  std::string tok;
  std::size_t n = 0;
  while (in >> tok) ++n;
  return n;
}

// Whitespace approximation used when an upstream agent did not record
// token counts. Information actions count their document text.
inline std::uint64_t approximate_tokens(const Action& a) {
  switch (a.kind) {
    case ActionKind::Reason:
    case ActionKind::Answer:
      return whitespace_token_count(a.text);
    case ActionKind::Search:
      return whitespace_token_count(a.query);
    case ActionKind::Information: {
      std::uint64_t n = 0;
      for (const auto& d : a.docs) n += whitespace_token_count(d.title) + whitespace_token_count(d.text);
      return n;
    }
  }
  return 0;
}

inline void validate_action(const Action& a, std::size_t index_1based) {
  auto where = [&] { return "action " + std::to_string(index_1based); };
  switch (a.kind) {
    case ActionKind::Search:
      if (a.query.empty()) throw InvariantError(where() + ": search action has an empty query");
      break;
    case ActionKind::Information: {
      std::unordered_map<std::string, int> seen;
      for (const auto& d : a.docs) {
        if (d.doc_id.empty()) throw InvariantError(where() + ": document with empty doc_id");
        if (++seen[d.doc_id] > 1)
          throw InvariantError(where() + ": duplicate doc_id \"" + d.doc_id + "\" within one information action");
      }
      break;
    }
    default:
      break;
  }
}

// Token usage attributed to one diagnose-and-repair episode.
struct CostLedger {
  std::uint64_t diagnosis_tokens = 0;
  std::uint64_t repair_tokens = 0;
  std::uint64_t retrieval_calls = 0;
  std::uint64_t wall_time_ms = 0;

  std::uint64_t total_tokens() const { return diagnosis_tokens + repair_tokens; }

  CostLedger& operator+=(const CostLedger& o) {
    diagnosis_tokens += o.diagnosis_tokens;
    repair_tokens += o.repair_tokens;
    retrieval_calls += o.retrieval_calls;
    wall_time_ms += o.wall_time_ms;
    return *this;
  }

  friend bool operator==(const CostLedger&, const CostLedger&) = default;
};

// An action-level trajectory: ordered actions plus the terminal predicted
// answer. Actions are addressed 1-based; the terminal answer, when present,
// sits at index K+1 where K is the number of non-terminal actions.
struct Trajectory {
  std::string id;
  std::string question;
  std::optional<std::string> gold_answer;              // evaluation only, never shown to diagnosis
  std::optional<std::vector<std::string>> gold_evidence;
  std::vector<Action> actions;
  std::string predicted_answer;
  json meta = json::object();

  bool has_terminal_answer() const {
    return !actions.empty() && actions.back().kind == ActionKind::Answer;
  }

  // Number of non-terminal actions.
  std::size_t K() const { return has_terminal_answer() ? actions.size() - 1 : actions.size(); }

  // 1-based access.
  const Action& action_at(std::size_t k) const {
    if (k < 1 || k > actions.size()) throw RangeError("action index " + std::to_string(k) + " out of range");
    return actions[k - 1];
  }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

inline void validate_trajectory(const Trajectory& t) {
  for (std::size_t i = 0; i < t.actions.size(); ++i) {
    const bool last = (i + 1 == t.actions.size());
    if (!last && t.actions[i].kind == ActionKind::Answer)
      throw InvariantError("trajectory \"" + t.id + "\": non-terminal action " + std::to_string(i + 1) +
                           " is answer-kind");
    validate_action(t.actions[i], i + 1);
  }
  if (t.has_terminal_answer()) {
    if (t.actions.back().text != t.predicted_answer)
      throw InvariantError("trajectory \"" + t.id + "\": terminal mismatch (predicted_answer \"" +
                           t.predicted_answer + "\" != terminal answer \"" + t.actions.back().text + "\")");
  } else if (!t.predicted_answer.empty()) {
    throw InvariantError("trajectory \"" + t.id + "\": predicted_answer set but no terminal answer action");
  }
}

// Actions strictly before k_dagger, copied verbatim. k_dagger = 1 keeps nothing.
inline std::vector<Action> prefix(const Trajectory& t, std::size_t k_dagger) {
  if (k_dagger < 1 || k_dagger > t.K() + 1)
    throw RangeError("prefix: k_dagger " + std::to_string(k_dagger) + " out of [1, " +
                     std::to_string(t.K() + 1) + "]");
  return std::vector<Action>(t.actions.begin(), t.actions.begin() + static_cast<std::ptrdiff_t>(k_dagger - 1));
}

// Union of all documents seen across information actions. Duplicate doc_ids
// collapse to the first occurrence, keeping the maximum score. First-seen
// order is preserved.
inline std::vector<Document> aggregate_documents(const Trajectory& t) {
  std::vector<Document> out;
  std::unordered_map<std::string, std::size_t> pos;
  for (const auto& a : t.actions) {
    if (a.kind != ActionKind::Information) continue;
    for (const auto& d : a.docs) {
      auto it = pos.find(d.doc_id);
      if (it == pos.end()) {
        pos.emplace(d.doc_id, out.size());
        out.push_back(d);
      } else if (d.score > out[it->second].score) {
        out[it->second].score = d.score;
      }
    }
  }
  return out;
}

// Queries of all search actions strictly before k_dagger, in order.
inline std::vector<std::string> collect_queries(const Trajectory& t, std::size_t k_dagger) {
  if (k_dagger < 1 || k_dagger > t.K() + 1)
    throw RangeError("collect_queries: k_dagger " + std::to_string(k_dagger) + " out of [1, " +
                     std::to_string(t.K() + 1) + "]");
  std::vector<std::string> out;
  for (std::size_t i = 0; i + 1 < k_dagger && i < t.actions.size(); ++i)
    if (t.actions[i].kind == ActionKind::Search) out.push_back(t.actions[i].query);
  return out;
}

}  // namespace drrag
