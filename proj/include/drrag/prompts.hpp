#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "drrag/errors.hpp"
#include "drrag/trajectory.hpp"

namespace drrag {

// Plain-text prompt templates with {{name}} placeholders. One role per
// template; a template directory overrides built-in defaults by file stem
// (e.g. templates/sufficiency.txt replaces the "sufficiency" role).
class PromptLibrary {
 public:
  static PromptLibrary defaults();

  void set(const std::string& role, std::string text) { templates_[role] = std::move(text); }

  bool has(const std::string& role) const { return templates_.count(role) > 0; }

  const std::string& raw(const std::string& role) const {
    auto it = templates_.find(role);
    if (it == templates_.end()) throw ConfigError("unknown prompt role: " + role);
    return it->second;
  }

  std::string render(const std::string& role, const std::map<std::string, std::string>& vars) const {
    std::string out = raw(role);
    for (const auto& [name, value] : vars) {
      const std::string placeholder = "{{" + name + "}}";
      std::size_t pos = 0;
      while ((pos = out.find(placeholder, pos)) != std::string::npos) {
        out.replace(pos, placeholder.size(), value);
        pos += value.size();
      }
    }
    return out;
  }

  void load_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw ConfigError("template directory not found: " + dir);
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
      std::ifstream in(entry.path());
      std::ostringstream buf;
      buf << in.rdbuf();
      templates_[entry.path().stem().string()] = buf.str();
    }
  }

  std::vector<std::string> roles() const {
    std::vector<std::string> out;
    for (const auto& [k, _] : templates_) out.push_back(k);
    return out;
  }

 private:
  std::map<std::string, std::string> templates_;
};

// --- prompt rendering helpers -------------------------------------------

inline std::string render_documents(const std::vector<Document>& docs) {
  std::ostringstream out;
  if (docs.empty()) {
    out << "(no documents retrieved)";
    return out.str();
  }
  std::size_t i = 1;
  for (const auto& d : docs) {
    out << "[" << i++ << "] " << d.title << "\n" << d.text << "\n";
  }
  return out.str();
}

inline std::string render_action(const Action& a, std::size_t index_1based) {
  std::ostringstream out;
  out << "(" << index_1based << ") ";
  switch (a.kind) {
    case ActionKind::Reason: out << "REASON: " << a.text; break;
    case ActionKind::Search: out << "SEARCH: " << a.query; break;
    case ActionKind::Information: {
      out << "INFORMATION:";
      for (const auto& d : a.docs) out << "\n  - " << d.title << ": " << d.text;
      break;
    }
    case ActionKind::Answer: out << "ANSWER: " << a.text; break;
  }
  return out.str();
}

inline std::string render_actions(const std::vector<Action>& actions, std::size_t first_index = 1) {
  if (actions.empty()) return "(empty)";
  std::ostringstream out;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (i) out << "\n";
    out << render_action(actions[i], first_index + i);
  }
  return out.str();
}

// --- built-in defaults ----------------------------------------------------

namespace default_templates {

inline constexpr const char* kSufficiency =
    "You judge whether retrieved documents contain enough evidence to answer a question.\n"
    "Question: {{question}}\n"
    "Retrieved documents:\n{{documents}}\n"
    "Do these documents, taken together, contain all the facts needed to answer the question?\n"
    "Reply with a single word: YES or NO.";

inline constexpr const char* kClassificationFull =
    "A question-answering agent produced the trajectory below and answered incorrectly.\n"
    "The retrieved documents are sufficient to answer the question, so the failure is either:\n"
    "- FormatError: the answer content is right but its wording or format breaks exact matching.\n"
    "- ReasoningError: the agent reasoned incorrectly over the evidence.\n"
    "Question: {{question}}\n"
    "Trajectory:\n{{trajectory}}\n"
    "Reply with exactly one label from: {{labels}}.";

inline constexpr const char* kClassificationPartial =
    "A question-answering agent produced the trajectory below and answered incorrectly.\n"
    "The retrieved documents are NOT sufficient to answer the question, so the failure is one of:\n"
    "- FormatError: the answer content is right but its wording or format breaks exact matching.\n"
    "- RetrieverError: the queries were well-formed but retrieval returned poor documents.\n"
    "- SearchError: faulty reasoning produced invalid or incomplete search queries.\n"
    "Question: {{question}}\n"
    "Trajectory:\n{{trajectory}}\n"
    "Reply with exactly one label from: {{labels}}.";

inline constexpr const char* kLocalization =
    "You examine one step of a question-answering trajectory that ended in a wrong answer.\n"
    "Question: {{question}}\n"
    "Steps so far:\n{{context}}\n"
    "Step under review:\n{{action}}\n"
    "Does this step deviate from a valid solution path (wrong inference, misdirected query,\n"
    "or unsupported claim)? Reply with a single word: YES or NO.";

inline constexpr const char* kRepairFormat =
    "Rewrite the final answer so it is a short, exact span with no extra words.\n"
    "Question: {{question}}\n"
    "Evidence:\n{{documents}}\n"
    "Previous answer (content is right, format is not): {{answer}}\n"
    "Reply with the corrected answer only, nothing else.";

inline constexpr const char* kRepairReasoning =
    "Continue this question-answering trajectory. The earlier steps are valid; the reasoning\n"
    "after them went wrong and has been discarded.\n"
    "Question: {{question}}\n"
    "Validated steps:\n{{prefix}}\n"
    "All retrieved evidence:\n{{documents}}\n"
    "Re-derive the answer from the evidence. Write one or more lines of the form\n"
    "REASON: <step>\n"
    "and finish with a single line\n"
    "ANSWER: <final answer>";

inline constexpr const char* kQueryRewrite =
    "A search query failed to retrieve the evidence needed for the question below.\n"
    "Question: {{question}}\n"
    "Original query: {{query}}\n"
    "Rewrite the query to improve recall while preserving its intent.\n"
    "Reply with the rewritten query only.";

inline constexpr const char* kPlan =
    "Plan how to finish answering the question below. The steps already taken are valid\n"
    "and will be kept; everything after them was discarded.\n"
    "Question: {{question}}\n"
    "Validated steps:\n{{prefix}}\n"
    "Write a short numbered plan, one step per line, each line of the form\n"
    "REASON: <what to conclude> or SEARCH: <query to run>.";

inline constexpr const char* kAnswerGeneration =
    "Answer the question from the context below. Reply with a short, exact answer span only.\n"
    "Question: {{question}}\n"
    "Context:\n{{context}}";

inline constexpr const char* kAgentSystem =
    "You answer multi-hop questions by interleaving reasoning and search.\n"
    "Each turn, think in plain text, then end your reply with exactly one of:\n"
    "SEARCH[<query>] to retrieve documents, or\n"
    "ANSWER[<final answer>] when you can answer.\n"
    "Keep answers short exact spans.";

inline constexpr const char* kNoiseScreen =
    "Is the following question well-posed and answerable in principle from an encyclopedia,\n"
    "as opposed to ambiguous, self-contradictory, or missing necessary context?\n"
    "Question: {{question}}\n"
    "Reply with a single word: ANSWERABLE or UNANSWERABLE.";

}  // namespace default_templates

inline PromptLibrary PromptLibrary::defaults() {
  PromptLibrary lib;
  lib.set("sufficiency", default_templates::kSufficiency);
  lib.set("classification-full", default_templates::kClassificationFull);
  lib.set("classification-partial", default_templates::kClassificationPartial);
  lib.set("per-action-localization", default_templates::kLocalization);
  lib.set("repair-format", default_templates::kRepairFormat);
  lib.set("repair-reasoning", default_templates::kRepairReasoning);
  lib.set("query-rewrite", default_templates::kQueryRewrite);
  lib.set("plan", default_templates::kPlan);
  lib.set("answer-generation", default_templates::kAnswerGeneration);
  lib.set("agent-system", default_templates::kAgentSystem);
  lib.set("noise-screen", default_templates::kNoiseScreen);
  return lib;
}

}  // namespace drrag
