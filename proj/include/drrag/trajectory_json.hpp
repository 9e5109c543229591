#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "drrag/trajectory.hpp"

namespace drrag {

namespace detail {

inline const json& require_field(const json& obj, const char* key, const std::string& ctx) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(ctx + ": missing field \"" + key + "\"");
  return *it;
}

inline std::string require_string(const json& obj, const char* key, const std::string& ctx) {
  const json& v = require_field(obj, key, ctx);
  if (!v.is_string()) throw ParseError(ctx + ": field \"" + key + "\" must be a string");
  return v.get<std::string>();
}

}  // namespace detail

inline Document parse_document(const json& obj, const std::string& ctx) {
  if (!obj.is_object()) throw ParseError(ctx + ": document must be an object");
  Document d;
  d.doc_id = detail::require_string(obj, "doc_id", ctx);
  d.title = detail::require_string(obj, "title", ctx);
  d.text = detail::require_string(obj, "text", ctx);
  const json& score = detail::require_field(obj, "score", ctx);
  if (!score.is_number()) throw ParseError(ctx + ": field \"score\" must be a number");
  d.score = score.get<double>();
  return d;
}

inline json serialize_document(const Document& d) {
  return json{{"doc_id", d.doc_id}, {"title", d.title}, {"text", d.text}, {"score", d.score}};
}

// Parses one action object. Exactly one payload field must be present and it
// must match the kind. A missing "tokens" field falls back to the whitespace
// approximation; the caller flags that in trajectory meta.
inline Action parse_action(const json& obj, std::size_t index_1based, bool* approximated) {
  const std::string ctx = "action " + std::to_string(index_1based);
  if (!obj.is_object()) throw ParseError(ctx + ": must be an object");
  Action a;
  a.kind = action_kind_from_string(detail::require_string(obj, "kind", ctx));

  const bool has_text = obj.contains("text");
  const bool has_query = obj.contains("query");
  const bool has_docs = obj.contains("docs");
  const int payloads = int(has_text) + int(has_query) + int(has_docs);
  if (payloads != 1)
    throw ParseError(ctx + ": exactly one payload field (text|query|docs) required, found " +
                     std::to_string(payloads));

  switch (a.kind) {
    case ActionKind::Reason:
    case ActionKind::Answer:
      if (!has_text) throw ParseError(ctx + ": kind \"" + to_string(a.kind) + "\" requires field \"text\"");
      a.text = detail::require_string(obj, "text", ctx);
      break;
    case ActionKind::Search:
      if (!has_query) throw ParseError(ctx + ": kind \"search\" requires field \"query\"");
      a.query = detail::require_string(obj, "query", ctx);
      break;
    case ActionKind::Information: {
      if (!has_docs) throw ParseError(ctx + ": kind \"information\" requires field \"docs\"");
      const json& docs = obj.at("docs");
      if (!docs.is_array()) throw ParseError(ctx + ": field \"docs\" must be an array");
      for (const auto& d : docs) a.docs.push_back(parse_document(d, ctx));
      break;
    }
  }

  if (obj.contains("tokens")) {
    const json& tok = obj.at("tokens");
    if (!tok.is_number_integer() || tok.get<std::int64_t>() < 0)
      throw ParseError(ctx + ": field \"tokens\" must be a non-negative integer");
    a.tokens = tok.get<std::uint64_t>();
  } else {
    a.tokens = approximate_tokens(a);
    if (approximated) *approximated = true;
  }
  return a;
}

inline json serialize_action(const Action& a) {
  json obj{{"kind", to_string(a.kind)}, {"tokens", a.tokens}};
  switch (a.kind) {
    case ActionKind::Reason:
    case ActionKind::Answer:
      obj["text"] = a.text;
      break;
    case ActionKind::Search:
      obj["query"] = a.query;
      break;
    case ActionKind::Information: {
      json docs = json::array();
      for (const auto& d : a.docs) docs.push_back(serialize_document(d));
      obj["docs"] = std::move(docs);
      break;
    }
  }
  return obj;
}

inline Trajectory parse_trajectory(const json& record) {
  if (!record.is_object()) throw ParseError("trajectory record must be a JSON object");
  Trajectory t;
  t.id = detail::require_string(record, "id", "trajectory");
  const std::string ctx = "trajectory \"" + t.id + "\"";
  t.question = detail::require_string(record, "question", ctx);

  const json& gold = detail::require_field(record, "gold_answer", ctx);
  if (gold.is_string()) t.gold_answer = gold.get<std::string>();
  else if (!gold.is_null()) throw ParseError(ctx + ": field \"gold_answer\" must be string or null");

  const json& evid = detail::require_field(record, "gold_evidence", ctx);
  if (evid.is_array()) {
    std::vector<std::string> ids;
    for (const auto& e : evid) {
      if (!e.is_string()) throw ParseError(ctx + ": \"gold_evidence\" entries must be strings");
      ids.push_back(e.get<std::string>());
    }
    t.gold_evidence = std::move(ids);
  } else if (!evid.is_null()) {
    throw ParseError(ctx + ": field \"gold_evidence\" must be array or null");
  }

  const json& actions = detail::require_field(record, "actions", ctx);
  if (!actions.is_array()) throw ParseError(ctx + ": field \"actions\" must be an array");
  bool approximated = false;
  std::size_t idx = 1;
  for (const auto& a : actions) t.actions.push_back(parse_action(a, idx++, &approximated));

  t.predicted_answer = detail::require_string(record, "predicted_answer", ctx);

  if (record.contains("meta")) {
    const json& meta = record.at("meta");
    if (!meta.is_object()) throw ParseError(ctx + ": field \"meta\" must be an object");
    t.meta = meta;
  }
  if (approximated) t.meta["token_approximation"] = true;

  validate_trajectory(t);
  return t;
}

inline json serialize_trajectory(const Trajectory& t) {
  json actions = json::array();
  for (const auto& a : t.actions) actions.push_back(serialize_action(a));
  return json{{"id", t.id},
              {"question", t.question},
              {"gold_answer", t.gold_answer ? json(*t.gold_answer) : json(nullptr)},
              {"gold_evidence", t.gold_evidence ? json(*t.gold_evidence) : json(nullptr)},
              {"actions", std::move(actions)},
              {"predicted_answer", t.predicted_answer},
              {"meta", t.meta}};
}

// Reads a JSONL dataset. Parse failures carry the 1-based line number.
inline std::vector<Trajectory> read_trajectory_jsonl(std::istream& in) {
  std::vector<Trajectory> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    try {
      out.push_back(parse_trajectory(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw ParseError("line " + std::to_string(lineno) + ": invalid JSON: " + e.what());
    } catch (const Error& e) {
      throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<Trajectory> read_trajectory_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset: " + path);
  try {
    return read_trajectory_jsonl(in);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline void write_trajectory_jsonl(std::ostream& out, const std::vector<Trajectory>& ts) {
  for (const auto& t : ts) out << serialize_trajectory(t).dump() << "\n";
}

inline void write_trajectory_jsonl(const std::string& path, const std::vector<Trajectory>& ts) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  write_trajectory_jsonl(out, ts);
}

}  // namespace drrag
