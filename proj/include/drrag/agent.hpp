#pragma once

#include <string>
#include <vector>

#include "drrag/backends.hpp"
#include "drrag/prompts.hpp"
#include "drrag/text.hpp"
#include "drrag/trajectory.hpp"

namespace drrag {

struct AgentRunOptions {
  std::size_t max_steps = 10;  // model turns before the fallback answer kicks in
  std::size_t top_k = 5;
  std::string model;
  std::uint64_t max_tokens = 1024;
};

// A bound agent loop: model + retriever + prompts + run options. Used by the
// rerun and step-wise baselines and by suffix regeneration.
struct AgentHandle {
  ModelClient* llm = nullptr;
  Retriever* retriever = nullptr;
  const PromptLibrary* prompts = nullptr;
  AgentRunOptions opts;
};

// ReAct-style loop: the model thinks in free text and ends each turn with
// SEARCH[query] or ANSWER[text]. A non-empty prefix seeds the conversation
// and is kept verbatim at the front of the returned trajectory. Usage and
// retrieval counts accumulate into *ledger's repair fields when given.
inline Trajectory run_agent(const std::string& question, ModelClient& llm, Retriever& retriever,
                            const PromptLibrary& prompts, const AgentRunOptions& opts,
                            CostLedger* ledger = nullptr, const std::vector<Action>& prefix_actions = {},
                            const std::string& scope = "") {
  if (opts.max_steps < 1) throw ConfigError("run_agent: max_steps must be >= 1");

  Trajectory t;
  t.question = question;
  t.actions = prefix_actions;

  std::vector<ChatMessage> messages;
  messages.push_back({"system", prompts.raw("agent-system")});
  std::string opening = "Question: " + question;
  if (!prefix_actions.empty())
    opening += "\nSteps already taken (keep building on them):\n" + render_actions(prefix_actions);
  messages.push_back({"user", opening});

  const std::string fp_scope = scope.empty() ? question : scope;
  std::string last_text;
  bool reprompted = false;
  bool answered = false;

  struct ParsedTurn {
    std::optional<std::string> search;
    std::optional<std::string> answer;
    std::string thought;
  };
  auto parse_turn = [](const std::string& content) {
    ParsedTurn parsed;
    std::size_t search_pos = std::string::npos, answer_pos = std::string::npos;
    const auto search_payload = extract_bracket_tag(content, "SEARCH", &search_pos);
    const auto answer_payload = extract_bracket_tag(content, "ANSWER", &answer_pos);
    const bool search_first = search_payload && (!answer_payload || search_pos < answer_pos);
    if (search_first && !trim(*search_payload).empty()) {
      parsed.search = trim(*search_payload);
      parsed.thought = trim(content.substr(0, search_pos));
    } else if (answer_payload) {
      parsed.answer = trim(*answer_payload);
      parsed.thought = trim(content.substr(0, answer_pos));
    } else {
      parsed.thought = trim(content);
    }
    return parsed;
  };

  for (std::size_t turn = 1; turn <= opts.max_steps && !answered; ++turn) {
    ModelRequest req;
    req.model = opts.model;
    req.temperature = 0.0;
    req.max_tokens = opts.max_tokens;
    req.messages = messages;
    req.fingerprint = "agent:" + fp_scope + ":" + std::to_string(turn);

    ModelReply reply = llm.chat_complete(req);
    if (ledger) ledger->repair_tokens += reply.usage.total();
    ParsedTurn parsed = parse_turn(reply.content);

    if (!parsed.search && !parsed.answer) {
      if (reprompted) {
        last_text = parsed.thought;
        break;
      }
      // One reprompt, re-asking the same protocol step.
      reprompted = true;
      messages.push_back({"assistant", reply.content});
      messages.push_back({"user", "Your reply must end with SEARCH[<query>] or ANSWER[<answer>]."});
      req.messages = messages;
      reply = llm.chat_complete(req);
      if (ledger) ledger->repair_tokens += reply.usage.total();
      parsed = parse_turn(reply.content);
      if (!parsed.search && !parsed.answer) {
        last_text = parsed.thought;
        break;
      }
    }

    auto remaining = reply.usage.completion_tokens;
    if (!parsed.thought.empty()) {
      t.actions.push_back(Action::reason(parsed.thought, remaining));
      remaining = 0;
    }
    if (parsed.search) {
      t.actions.push_back(Action::search(*parsed.search, remaining));
      RetrievalReply rr = retriever.retrieve({*parsed.search, opts.top_k});
      if (ledger) ++ledger->retrieval_calls;
      t.actions.push_back(Action::information(rr.documents, 0));
      messages.push_back({"assistant", reply.content});
      messages.push_back({"user", "Retrieved documents:\n" + render_documents(rr.documents)});
    } else {
      t.actions.push_back(Action::answer(*parsed.answer, remaining));
      t.predicted_answer = *parsed.answer;
      answered = true;
    }
    last_text = parsed.thought;
  }

  if (!answered) {
    t.actions.push_back(Action::answer(last_text, 0));
    t.predicted_answer = last_text;
    t.meta["agent_fallback"] = true;
  }

  validate_trajectory(t);
  return t;
}

inline Trajectory run_agent(const AgentHandle& agent, const std::string& question,
                            CostLedger* ledger = nullptr, const std::vector<Action>& prefix_actions = {},
                            const std::string& scope = "") {
  return run_agent(question, *agent.llm, *agent.retriever, *agent.prompts, agent.opts, ledger,
                   prefix_actions, scope);
}

}  // namespace drrag
