#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "drrag/agent.hpp"
#include "drrag/backends.hpp"
#include "drrag/diagnosis.hpp"
#include "drrag/prompts.hpp"
#include "drrag/session.hpp"
#include "drrag/taxonomy.hpp"
#include "drrag/text.hpp"
#include "drrag/trajectory.hpp"

namespace drrag {

enum class RepairOperatorId { AnswerRewrite, EvidenceGroundedReReason, QueryRewriteTopK, PlanBasedRepair };

inline const char* to_string(RepairOperatorId op) {
  switch (op) {
    case RepairOperatorId::AnswerRewrite: return "answer_rewrite";
    case RepairOperatorId::EvidenceGroundedReReason: return "evidence_grounded_rereason";
    case RepairOperatorId::QueryRewriteTopK: return "query_rewrite_topk";
    case RepairOperatorId::PlanBasedRepair: return "plan_based_repair";
  }
  return "unknown";
}

// Diagnosis-driven operator selection; total and injective on ErrorType.
inline RepairOperatorId select_operator(ErrorType c) {
  switch (c) {
    case ErrorType::FormatError: return RepairOperatorId::AnswerRewrite;
    case ErrorType::ReasoningError: return RepairOperatorId::EvidenceGroundedReReason;
    case ErrorType::RetrieverError: return RepairOperatorId::QueryRewriteTopK;
    case ErrorType::SearchError: return RepairOperatorId::PlanBasedRepair;
  }
  throw InvariantError("select_operator: unknown error type");
}

struct RepairOutcome {
  Trajectory repaired;
  std::string operator_name;
  CostLedger ledger;
  std::size_t prefix_len = 0;
  std::size_t retrieval_calls = 0;
  std::string new_predicted_answer;
  std::vector<std::string> flags;

  bool flagged(const std::string& f) const {
    for (const auto& x : flags)
      if (x == f) return true;
    return false;
  }
};

namespace detail {

// Rebuild a trajectory around a kept prefix and a fresh suffix, preserving
// identity, gold fields and meta.
inline Trajectory rebuild(const Trajectory& original, std::vector<Action> actions,
                          const std::string& predicted) {
  Trajectory out = original;
  out.actions = std::move(actions);
  out.predicted_answer = predicted;
  validate_trajectory(out);
  return out;
}

inline std::uint64_t ws_tokens(const std::string& s) {
  return static_cast<std::uint64_t>(whitespace_token_count(s));
}

}  // namespace detail

// Format repair: rewrite only the terminal answer. The reasoning and
// retrieval actions are conditionally valid and stay untouched.
inline RepairOutcome repair_format(const Trajectory& t, ModelClient& llm, const PromptLibrary& prompts,
                                   const std::string& model_name = "") {
  if (!t.has_terminal_answer())
    throw InvariantError("repair_format: trajectory \"" + t.id + "\" has no terminal answer action");

  RepairOutcome out;
  out.operator_name = to_string(RepairOperatorId::AnswerRewrite);
  out.prefix_len = t.K();

  PromptSession session(llm, prompts, t.id, model_name);
  const ModelReply reply = session.ask("repair-format", {{"question", t.question},
                                                         {"documents", render_documents(aggregate_documents(t))},
                                                         {"answer", t.predicted_answer}});
  std::string answer = trim(reply.content);
  if (answer.empty()) {
    answer = t.predicted_answer;
    out.flags.push_back("empty_rewrite");
  }

  std::vector<Action> actions(t.actions.begin(), t.actions.end() - 1);
  actions.push_back(Action::answer(answer, reply.usage.completion_tokens));
  out.repaired = detail::rebuild(t, std::move(actions), answer);
  out.new_predicted_answer = answer;
  out.ledger.repair_tokens = session.tokens();
  return out;
}

// Reasoning repair: keep the prefix before k_dagger, discard the rest, and
// re-derive the answer grounded on the aggregated document set. No retrieval.
inline RepairOutcome repair_reasoning(const Trajectory& t, std::size_t k_dagger, ModelClient& llm,
                                      const PromptLibrary& prompts, std::size_t max_steps = 10,
                                      const std::string& model_name = "") {
  if (k_dagger < 1 || k_dagger > t.K())
    throw RangeError("repair_reasoning: k_dagger " + std::to_string(k_dagger) + " out of [1, " +
                     std::to_string(t.K()) + "]");

  RepairOutcome out;
  out.operator_name = to_string(RepairOperatorId::EvidenceGroundedReReason);
  out.prefix_len = k_dagger - 1;

  const auto kept = prefix(t, k_dagger);
  const std::map<std::string, std::string> vars{
      {"question", t.question},
      {"prefix", render_actions(kept)},
      {"documents", render_documents(aggregate_documents(t))}};

  PromptSession session(llm, prompts, t.id, model_name);
  std::vector<StepLine> steps;
  std::optional<std::string> answer;
  for (int attempt = 0; attempt < 2 && !answer; ++attempt) {
    steps = parse_step_lines(session.ask("repair-reasoning", vars).content);
    for (const auto& s : steps)
      if (s.tag == StepTag::Answer && !answer) answer = s.text;
  }
  out.ledger.repair_tokens = session.tokens();

  std::size_t reason_count = 0;
  for (const auto& s : steps)
    if (s.tag == StepTag::Reason) ++reason_count;

  if (!answer || answer->empty()) {
    out.flags.push_back("no_answer_line");
    out.repaired = t;  // original retained
    out.new_predicted_answer = t.predicted_answer;
    return out;
  }
  if (reason_count > max_steps) {
    out.flags.push_back("suffix_budget_exceeded");
    out.repaired = t;
    out.new_predicted_answer = t.predicted_answer;
    return out;
  }

  std::vector<Action> actions = kept;
  for (const auto& s : steps)
    if (s.tag == StepTag::Reason) actions.push_back(Action::reason(s.text, detail::ws_tokens(s.text)));
  actions.push_back(Action::answer(*answer, detail::ws_tokens(*answer)));
  out.repaired = detail::rebuild(t, std::move(actions), *answer);
  out.new_predicted_answer = *answer;
  return out;
}

// Retriever repair: rewrite the queries issued before the failure, re-run
// them with an enlarged top-k, and regenerate the answer from the retained
// prefix plus the augmented results.
inline RepairOutcome repair_retriever(const Trajectory& t, std::size_t k_dagger, ModelClient& llm,
                                      Retriever& retriever, std::size_t base_top_k, std::size_t multiplier,
                                      const PromptLibrary& prompts, const std::string& model_name = "") {
  const std::size_t boosted_top_k = base_top_k * multiplier;
  if (boosted_top_k <= base_top_k)
    throw ConfigError("repair_retriever: top_k multiplier must be >= 2 (got " +
                      std::to_string(multiplier) + ")");

  RepairOutcome out;
  out.operator_name = to_string(RepairOperatorId::QueryRewriteTopK);
  out.prefix_len = k_dagger - 1;

  const auto kept = prefix(t, k_dagger);
  std::vector<std::string> prev_queries = collect_queries(t, k_dagger);
  if (prev_queries.empty()) {
    prev_queries.push_back(t.question);
    out.flags.push_back("no_prior_queries");
  }

  PromptSession session(llm, prompts, t.id, model_name);
  std::vector<Action> actions = kept;
  for (const auto& q : prev_queries) {
    const ModelReply reply =
        session.ask("query-rewrite", {{"question", t.question}, {"query", q}}, ":" + q);
    std::string rewritten = trim(reply.content);
    if (rewritten.empty()) {
      rewritten = q;
      out.flags.push_back("empty_query_rewrite");
    }
    actions.push_back(Action::search(rewritten, reply.usage.completion_tokens));
    RetrievalReply rr = retriever.retrieve({rewritten, boosted_top_k});
    ++out.ledger.retrieval_calls;
    actions.push_back(Action::information(rr.documents, 0));
  }

  const ModelReply final_reply = session.ask(
      "answer-generation", {{"question", t.question}, {"context", render_actions(actions)}});
  std::string answer = trim(final_reply.content);
  if (answer.empty()) {
    answer = t.predicted_answer;
    out.flags.push_back("empty_answer");
  }
  actions.push_back(Action::answer(answer, final_reply.usage.completion_tokens));

  out.repaired = detail::rebuild(t, std::move(actions), answer);
  out.new_predicted_answer = answer;
  out.ledger.repair_tokens = session.tokens();
  out.retrieval_calls = out.ledger.retrieval_calls;
  return out;
}

// Search repair: plan a fresh solution from the retained prefix, execute the
// plan's reason/search steps, then answer from the accumulated context. Both
// reasoning and retrieval may diverge beyond the truncation point.
inline RepairOutcome repair_search(const Trajectory& t, std::size_t k_dagger, ModelClient& llm,
                                   Retriever& retriever, const PromptLibrary& prompts,
                                   std::size_t base_top_k = 5, std::size_t max_steps = 10,
                                   const std::string& model_name = "") {
  RepairOutcome out;
  out.operator_name = to_string(RepairOperatorId::PlanBasedRepair);
  out.prefix_len = k_dagger - 1;

  const auto kept = prefix(t, k_dagger);
  const std::map<std::string, std::string> vars{{"question", t.question}, {"prefix", render_actions(kept)}};

  PromptSession session(llm, prompts, t.id, model_name);
  std::vector<StepLine> plan;
  for (int attempt = 0; attempt < 2 && plan.empty(); ++attempt) {
    std::size_t skipped = 0;
    plan = parse_step_lines(session.ask("plan", vars).content, &skipped);
    if (skipped > 0) out.flags.push_back("plan_line_skipped");
    std::erase_if(plan, [](const StepLine& s) { return s.tag == StepTag::Answer; });
  }
  if (plan.empty()) {
    out.ledger.repair_tokens = session.tokens();
    throw ParseError("repair_search: plan unparseable for trajectory \"" + t.id + "\"");
  }

  std::vector<Action> actions = kept;
  std::size_t appended = 0;
  for (const auto& step : plan) {
    if (appended >= max_steps) {
      out.flags.push_back("step_budget_exhausted");
      break;
    }
    if (step.tag == StepTag::Reason) {
      actions.push_back(Action::reason(step.text, detail::ws_tokens(step.text)));
      ++appended;
    } else if (step.tag == StepTag::Search) {
      if (step.text.empty()) continue;
      actions.push_back(Action::search(step.text, detail::ws_tokens(step.text)));
      RetrievalReply rr = retriever.retrieve({step.text, base_top_k});
      ++out.ledger.retrieval_calls;
      actions.push_back(Action::information(rr.documents, 0));
      appended += 2;
    }
  }

  const ModelReply final_reply = session.ask(
      "answer-generation", {{"question", t.question}, {"context", render_actions(actions)}});
  std::string answer = trim(final_reply.content);
  if (answer.empty()) {
    answer = t.predicted_answer;
    out.flags.push_back("empty_answer");
  }
  actions.push_back(Action::answer(answer, final_reply.usage.completion_tokens));

  out.repaired = detail::rebuild(t, std::move(actions), answer);
  out.new_predicted_answer = answer;
  out.ledger.repair_tokens = session.tokens();
  out.retrieval_calls = out.ledger.retrieval_calls;
  return out;
}

// Rerun baseline: discard the failed trajectory entirely and regenerate from
// the bare question. Nothing of the original run enters the prompts.
inline RepairOutcome rerun_baseline(const Trajectory& t, const AgentHandle& agent) {
  RepairOutcome out;
  out.operator_name = "rerun";
  out.prefix_len = 0;

  Trajectory fresh = run_agent(agent, t.question, &out.ledger, {}, t.id);
  fresh.id = t.id;
  fresh.gold_answer = t.gold_answer;
  fresh.gold_evidence = t.gold_evidence;
  for (auto it = t.meta.begin(); it != t.meta.end(); ++it)
    if (!fresh.meta.contains(it.key())) fresh.meta[it.key()] = it.value();

  out.new_predicted_answer = fresh.predicted_answer;
  out.repaired = std::move(fresh);
  out.retrieval_calls = out.ledger.retrieval_calls;
  return out;
}

// Step-wise retry baseline: verify reason steps in order, keep everything
// before the first invalid one, and regenerate the rest with the agent loop.
// No error typing, no taxonomy.
inline RepairOutcome stepwise_retry_baseline(const Trajectory& t, ModelClient& judge,
                                             const AgentHandle& agent,
                                             const std::string& model_name = "") {
  RepairOutcome out;
  out.operator_name = "stepwise_retry";

  PromptSession verify(judge, *agent.prompts, t.id, model_name);
  std::optional<std::size_t> first_invalid;
  for (std::size_t k = 1; k <= t.K() && !first_invalid; ++k) {
    if (t.action_at(k).kind != ActionKind::Reason) continue;
    const std::vector<Action> before(t.actions.begin(), t.actions.begin() + static_cast<std::ptrdiff_t>(k - 1));
    const std::map<std::string, std::string> vars{
        {"question", t.question},
        {"context", render_actions(before)},
        {"action", render_action(t.action_at(k), k)},
        {"index", std::to_string(k)}};
    std::optional<bool> verdict;
    for (int attempt = 0; attempt < 2 && !verdict; ++attempt)
      verdict = detail::parse_yes_no(verify.ask("per-action-localization", vars, ":verify:" + std::to_string(k)).content);
    if (!verdict) {
      out.flags.push_back("unparseable_verification");
      continue;  // treated as valid
    }
    if (*verdict) first_invalid = k;
  }
  out.ledger.diagnosis_tokens = verify.tokens();

  if (!first_invalid) {
    // Every step verified: regenerate only the terminal answer.
    out.prefix_len = t.K();
    const std::vector<Action> kept(t.actions.begin(), t.actions.begin() + static_cast<std::ptrdiff_t>(t.K()));
    PromptSession regen(*agent.llm, *agent.prompts, t.id, model_name);
    const ModelReply reply = regen.ask(
        "answer-generation", {{"question", t.question}, {"context", render_actions(kept)}});
    std::string answer = trim(reply.content);
    if (answer.empty()) {
      answer = t.predicted_answer;
      out.flags.push_back("empty_answer");
    }
    std::vector<Action> actions = kept;
    actions.push_back(Action::answer(answer, reply.usage.completion_tokens));
    out.repaired = detail::rebuild(t, std::move(actions), answer);
    out.new_predicted_answer = answer;
    out.ledger.repair_tokens = regen.tokens();
    return out;
  }

  out.prefix_len = *first_invalid - 1;
  const std::vector<Action> kept(t.actions.begin(),
                                 t.actions.begin() + static_cast<std::ptrdiff_t>(out.prefix_len));
  Trajectory fresh = run_agent(agent, t.question, &out.ledger, kept, t.id);
  fresh.id = t.id;
  fresh.gold_answer = t.gold_answer;
  fresh.gold_evidence = t.gold_evidence;
  for (auto it = t.meta.begin(); it != t.meta.end(); ++it)
    if (!fresh.meta.contains(it.key())) fresh.meta[it.key()] = it.value();
  out.new_predicted_answer = fresh.predicted_answer;
  out.repaired = std::move(fresh);
  out.retrieval_calls = out.ledger.retrieval_calls;
  return out;
}

enum class AblationMode { NoTaxonomy, NoLocalization };

// Ablated repair. NoTaxonomy cannot tell failure types apart and always
// plans; NoLocalization keeps the type-specific operator but regenerates the
// whole trajectory body (k_dagger forced to 1).
inline RepairOutcome ablation_repair(const Trajectory& t, const Diagnosis& diagnosis, AblationMode mode,
                                     ModelClient& llm, Retriever& retriever, const PromptLibrary& prompts,
                                     std::size_t base_top_k, std::size_t multiplier,
                                     std::size_t max_steps, const std::string& model_name = "") {
  if (mode == AblationMode::NoTaxonomy)
    return repair_search(t, diagnosis.k_dagger, llm, retriever, prompts, base_top_k, max_steps, model_name);

  switch (select_operator(diagnosis.error_type)) {
    case RepairOperatorId::AnswerRewrite:
      return repair_format(t, llm, prompts, model_name);
    case RepairOperatorId::EvidenceGroundedReReason:
      return repair_reasoning(t, 1, llm, prompts, max_steps, model_name);
    case RepairOperatorId::QueryRewriteTopK:
      return repair_retriever(t, 1, llm, retriever, base_top_k, multiplier, prompts, model_name);
    case RepairOperatorId::PlanBasedRepair:
      return repair_search(t, 1, llm, retriever, prompts, base_top_k, max_steps, model_name);
  }
  throw InvariantError("ablation_repair: unreachable");
}

}  // namespace drrag
