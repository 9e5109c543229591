#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "drrag/backends.hpp"
#include "drrag/prompts.hpp"
#include "drrag/session.hpp"
#include "drrag/taxonomy.hpp"
#include "drrag/trajectory.hpp"

namespace drrag {

// Ground-truth label attached by the failure injector; the oracle diagnosis
// mode replays it verbatim.
struct InjectionLabel {
  ErrorType error_type = ErrorType::FormatError;
  std::size_t k_dagger = 1;
  std::string description;

  friend bool operator==(const InjectionLabel&, const InjectionLabel&) = default;
};

// A diagnosis episode talks to its judge through a PromptSession.
using JudgeSession = PromptSession;

namespace detail {

inline std::string squash(const std::string& s) {
  std::string out;
  for (unsigned char c : s)
    if (std::isalnum(c)) out.push_back(static_cast<char>(std::tolower(c)));
  return out;
}

inline std::optional<bool> parse_yes_no(const std::string& reply) {
  std::string low;
  low.reserve(reply.size());
  for (unsigned char c : reply) low.push_back(static_cast<char>(std::tolower(c)));
  auto word_at = [&](std::size_t pos, std::size_t len) {
    const bool left_ok = pos == 0 || !std::isalpha(static_cast<unsigned char>(low[pos - 1]));
    const std::size_t end = pos + len;
    const bool right_ok = end >= low.size() || !std::isalpha(static_cast<unsigned char>(low[end]));
    return left_ok && right_ok;
  };
  std::size_t yes = std::string::npos, no = std::string::npos;
  for (std::size_t pos = low.find("yes"); pos != std::string::npos; pos = low.find("yes", pos + 1))
    if (word_at(pos, 3)) { yes = pos; break; }
  for (std::size_t pos = low.find("no"); pos != std::string::npos; pos = low.find("no", pos + 1))
    if (word_at(pos, 2)) { no = pos; break; }
  if (yes == std::string::npos && no == std::string::npos) return std::nullopt;
  if (yes == std::string::npos) return false;
  if (no == std::string::npos) return true;
  return yes < no;
}

// First admissible label mentioned in the reply; inadmissible mentions are
// ignored so the coverage gate cannot be bypassed by a wayward judge.
inline std::optional<ErrorType> parse_error_label(const std::string& reply,
                                                  const std::vector<ErrorType>& admissible) {
  const std::string flat = squash(reply);
  std::size_t best_pos = std::string::npos;
  std::optional<ErrorType> best;
  for (ErrorType e : admissible) {
    const std::string name = std::string(to_string(e)) + "error";
    std::size_t pos = flat.find(name);
    if (pos == std::string::npos && flat == to_string(e)) pos = 0;
    if (pos != std::string::npos && pos < best_pos) {
      best_pos = pos;
      best = e;
    }
  }
  return best;
}

inline std::string labels_text(const std::vector<ErrorType>& labels) {
  std::string out;
  for (ErrorType e : labels) {
    if (!out.empty()) out += ", ";
    std::string name = to_string(e);
    name[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
    out += name + "Error";
  }
  return out;
}

}  // namespace detail

// Coverage assessment. With oracle evidence the verdict is a plain subset
// check and costs nothing; otherwise the judge is asked for a sufficiency
// verdict (one retry, then the conservative Partial default).
inline Coverage assess_coverage(const std::string& question, const std::vector<Document>& docs,
                                const std::optional<std::vector<std::string>>& gold_evidence,
                                JudgeSession* judge) {
  if (gold_evidence.has_value()) {
    Coverage cov;
    cov.source = CoverageSource::OracleEvidence;
    cov.value = CoverageValue::Full;
    for (const auto& want : *gold_evidence) {
      const bool found = std::any_of(docs.begin(), docs.end(),
                                     [&](const Document& d) { return d.doc_id == want; });
      if (!found) {
        cov.value = CoverageValue::Partial;
        break;
      }
    }
    return cov;
  }
  if (!judge) throw ConfigError("assess_coverage: no gold evidence and no judge available");

  const std::map<std::string, std::string> vars{{"question", question},
                                                {"documents", render_documents(docs)}};
  Coverage cov;
  cov.source = CoverageSource::JudgeModel;
  for (int attempt = 0; attempt < 2; ++attempt) {
    const ModelReply reply = judge->ask("sufficiency", vars);
    if (auto verdict = detail::parse_yes_no(reply.content)) {
      cov.value = *verdict ? CoverageValue::Full : CoverageValue::Partial;
      return cov;
    }
  }
  cov.value = CoverageValue::Partial;
  cov.fallback = true;
  return cov;
}

// Taxonomy-constrained classification. The judge sees only the admissible
// labels for the assessed coverage; its reply is parsed as the first
// admissible label mentioned. Unparseable replies fall back per coverage.
inline ErrorType classify_error(const std::string& question, const Trajectory& t,
                                const Coverage& coverage, JudgeSession& judge,
                                bool* fallback_flag = nullptr, std::string* rationale = nullptr) {
  const auto labels = admissible_labels(coverage);
  const std::string role =
      coverage.value == CoverageValue::Full ? "classification-full" : "classification-partial";
  const std::map<std::string, std::string> vars{
      {"question", question},
      {"trajectory", render_actions(t.actions)},
      {"labels", detail::labels_text(labels)}};
  for (int attempt = 0; attempt < 2; ++attempt) {
    const ModelReply reply = judge.ask(role, vars);
    if (rationale && attempt == 0) *rationale = reply.content;
    if (auto label = detail::parse_error_label(reply.content, labels)) return *label;
  }
  if (fallback_flag) *fallback_flag = true;
  return coverage.value == CoverageValue::Full ? ErrorType::ReasoningError : ErrorType::SearchError;
}

inline std::vector<std::size_t> localization_candidates(const Trajectory& t, ErrorType error_type) {
  const ActionKind wanted =
      error_type == ErrorType::RetrieverError ? ActionKind::Search : ActionKind::Reason;
  std::vector<std::size_t> out;
  for (std::size_t k = 1; k <= t.K(); ++k)
    if (t.action_at(k).kind == wanted) out.push_back(k);
  return out;
}

// Earliest-failure localization: candidates are judged in order and the
// first step marked erroneous wins. Format errors always localize to the
// terminal answer step without any judge calls.
inline std::size_t localize_failure(const Trajectory& t, ErrorType error_type, JudgeSession& judge,
                                    bool* fallback_flag = nullptr) {
  if (error_type == ErrorType::FormatError) return t.K() + 1;

  const auto candidates = localization_candidates(t, error_type);
  if (candidates.empty())
    throw InvariantError("localize_failure: trajectory \"" + t.id + "\" has no " +
                         (error_type == ErrorType::RetrieverError ? "search" : "reason") +
                         " actions to localize over");

  for (std::size_t k : candidates) {
    const std::vector<Action> before(t.actions.begin(), t.actions.begin() + static_cast<std::ptrdiff_t>(k - 1));
    const std::map<std::string, std::string> vars{
        {"question", t.question},
        {"context", render_actions(before)},
        {"action", render_action(t.action_at(k), k)},
        {"index", std::to_string(k)}};
    std::optional<bool> verdict;
    for (int attempt = 0; attempt < 2 && !verdict; ++attempt)
      verdict = detail::parse_yes_no(judge.ask("per-action-localization", vars, ":" + std::to_string(k)).content);
    if (!verdict) {
      if (fallback_flag) *fallback_flag = true;  // unparseable treated as not-erroneous
      continue;
    }
    if (*verdict) return k;
  }
  if (fallback_flag) *fallback_flag = true;
  return candidates.back();
}

enum class CoverageMode { OracleEvidence, Judge };

struct DiagnoseOptions {
  CoverageMode coverage_mode = CoverageMode::OracleEvidence;  // falls back to judge without evidence
};

// Full diagnosis: coverage -> classification -> localization. Never reads
// the gold answer; diagnosis_tokens is the sum of all judge usage here.
inline Diagnosis diagnose(const Trajectory& t, JudgeSession& judge, const DiagnoseOptions& opts = {}) {
  Diagnosis d;
  const auto docs = aggregate_documents(t);
  const bool use_oracle =
      opts.coverage_mode == CoverageMode::OracleEvidence && t.gold_evidence.has_value();
  d.coverage = assess_coverage(t.question, docs, use_oracle ? t.gold_evidence : std::nullopt, &judge);
  d.error_type = classify_error(t.question, t, d.coverage, judge, &d.fallback_label, &d.rationale);
  d.k_dagger = localize_failure(t, d.error_type, judge, &d.fallback_localization);
  d.diagnosis_tokens = judge.tokens();
  validate_diagnosis(d, t.K());
  return d;
}

// Oracle mode: replay the injected ground truth with zero diagnosis cost.
inline Diagnosis oracle_diagnose(const Trajectory& t, const InjectionLabel& truth) {
  Diagnosis d;
  d.error_type = truth.error_type;
  d.k_dagger = truth.k_dagger;
  d.coverage.source = CoverageSource::OracleEvidence;
  switch (truth.error_type) {
    case ErrorType::ReasoningError:
      d.coverage.value = CoverageValue::Full;
      break;
    case ErrorType::RetrieverError:
    case ErrorType::SearchError:
      d.coverage.value = CoverageValue::Partial;
      break;
    case ErrorType::FormatError:
      // Admissible under both coverages; derive from evidence when we can.
      if (t.gold_evidence) {
        d.coverage = assess_coverage(t.question, aggregate_documents(t), t.gold_evidence, nullptr);
      } else {
        d.coverage.value = CoverageValue::Full;
      }
      break;
  }
  d.rationale = truth.description;
  d.diagnosis_tokens = 0;
  validate_diagnosis(d, t.K());
  return d;
}

}  // namespace drrag
