#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "drrag/diagnosis.hpp"
#include "drrag/metrics.hpp"
#include "drrag/taxonomy.hpp"
#include "drrag/trajectory.hpp"

namespace drrag {

struct InjectionResult {
  Trajectory trajectory;
  InjectionLabel label;
};

inline json injection_label_to_json(const InjectionLabel& label) {
  return json{{"error_type", to_string(label.error_type)},
              {"k_dagger", label.k_dagger},
              {"description", label.description}};
}

inline std::optional<InjectionLabel> injection_label_of(const Trajectory& t) {
  if (!t.meta.contains("injection")) return std::nullopt;
  const json& j = t.meta.at("injection");
  InjectionLabel label;
  label.error_type = error_type_from_string(j.at("error_type").get<std::string>());
  label.k_dagger = j.at("k_dagger").get<std::size_t>();
  label.description = j.value("description", std::string{});
  return label;
}

namespace detail {

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline const std::vector<Document>& off_topic_pool() {
  static const std::vector<Document> pool = {
      {"offtopic-tides", "Ocean tide", "Tides are the rise and fall of sea levels caused by the combined "
                                       "gravitational effects of the Moon and the Sun.", 0.31},
      {"offtopic-sonata", "Sonata form", "Sonata form is a musical structure consisting of an exposition, "
                                         "a development, and a recapitulation.", 0.29},
      {"offtopic-lichen", "Lichen", "A lichen is a composite organism arising from algae or cyanobacteria "
                                    "living among filaments of fungi.", 0.27},
      {"offtopic-basalt", "Basalt", "Basalt is a fine-grained extrusive igneous rock formed from the rapid "
                                    "cooling of low-viscosity lava.", 0.25},
      {"offtopic-abacus", "Abacus", "The abacus is a calculating tool that was in use in the ancient Near "
                                    "East and remains common in parts of Asia.", 0.23},
  };
  return pool;
}

// A deterministic wrong-but-plausible answer: a document title that does not
// normalize to the gold answer.
inline std::string pick_distractor(const Trajectory& t, std::mt19937_64& rng) {
  const std::string gold_norm = normalize_answer(*t.gold_answer);
  std::vector<std::string> candidates;
  for (const auto& d : aggregate_documents(t))
    if (!d.title.empty() && normalize_answer(d.title) != gold_norm) candidates.push_back(d.title);
  if (candidates.empty()) {
    for (const auto& d : off_topic_pool()) candidates.push_back(d.title);
  }
  return candidates[rng() % candidates.size()];
}

inline std::vector<Document> pick_off_topic(std::mt19937_64& rng) {
  const auto& pool = off_topic_pool();
  const std::size_t first = rng() % pool.size();
  std::vector<Document> docs{pool[first]};
  docs.push_back(pool[(first + 1 + rng() % (pool.size() - 1)) % pool.size()]);
  if (docs[1].doc_id == docs[0].doc_id) docs.pop_back();
  return docs;
}

inline bool gold_evidence_covered(const Trajectory& t) {
  if (!t.gold_evidence) return false;
  const auto docs = aggregate_documents(t);
  for (const auto& want : *t.gold_evidence) {
    const bool found =
        std::any_of(docs.begin(), docs.end(), [&](const Document& d) { return d.doc_id == want; });
    if (!found) return false;
  }
  return true;
}

inline void set_answer(Trajectory& t, const std::string& answer) {
  t.actions.back() = Action::answer(answer, t.actions.back().tokens);
  t.predicted_answer = answer;
}

}  // namespace detail

// Deterministic, seed-driven corruption of an initially correct trajectory.
// Returns nullopt when the target failure type cannot be realized on this
// trajectory (the skip signal). The injected label also lands in
// meta["injection"] so oracle runs can recover it from the JSONL alone.
inline std::optional<InjectionResult> inject_failure(const Trajectory& clean, ErrorType target,
                                                     std::uint64_t seed) {
  if (!clean.gold_answer) throw ConfigError("inject_failure: trajectory \"" + clean.id + "\" has no gold answer");
  if (exact_match(clean.predicted_answer, *clean.gold_answer) != 1)
    throw InvariantError("inject_failure: trajectory \"" + clean.id + "\" is not initially correct");
  if (!clean.has_terminal_answer()) return std::nullopt;

  std::mt19937_64 rng(seed ^ detail::fnv1a(clean.id));
  Trajectory t = clean;
  InjectionLabel label;
  label.error_type = target;

  switch (target) {
    case ErrorType::FormatError: {
      static const char* kWrappers[] = {
          "Based on the evidence, the answer would be the %s region.",
          "I believe the correct answer is %s, as supported by the documents.",
          "Considering all retrieved passages, %s appears to be what the question asks about.",
      };
      const std::string& answer = clean.predicted_answer;
      const char* wrapper = kWrappers[rng() % 3];
      char buf[1024];
      std::snprintf(buf, sizeof(buf), wrapper, answer.c_str());
      detail::set_answer(t, buf);
      label.k_dagger = t.K() + 1;
      label.description = "verbose wrapping of a correct answer";
      break;
    }

    case ErrorType::ReasoningError: {
      std::vector<std::size_t> reasons;
      for (std::size_t k = 1; k <= t.K(); ++k)
        if (t.action_at(k).kind == ActionKind::Reason) reasons.push_back(k);
      if (reasons.empty()) return std::nullopt;
      const std::size_t k = reasons[rng() % reasons.size()];
      const std::string wrong = detail::pick_distractor(t, rng);
      t.actions[k - 1] = Action::reason(
          "Weighing the evidence again, it must follow that " + wrong + " is the answer here.",
          t.actions[k - 1].tokens);
      detail::set_answer(t, wrong);
      label.k_dagger = k;
      label.description = "contradictory conclusion substituted at reason step " + std::to_string(k);
      break;
    }

    case ErrorType::RetrieverError: {
      // Candidates: information actions directly after their search action.
      std::vector<std::size_t> infos;
      for (std::size_t k = 2; k <= t.K(); ++k)
        if (t.action_at(k).kind == ActionKind::Information &&
            t.action_at(k - 1).kind == ActionKind::Search)
          infos.push_back(k);
      if (infos.empty()) return std::nullopt;

      std::vector<std::size_t> order = infos;
      std::shuffle(order.begin(), order.end(), rng);
      bool done = false;
      for (std::size_t k : order) {
        Trajectory attempt = t;
        attempt.actions[k - 1] = Action::information(detail::pick_off_topic(rng), attempt.actions[k - 1].tokens);
        if (attempt.gold_evidence && detail::gold_evidence_covered(attempt)) continue;
        t = std::move(attempt);
        label.k_dagger = k - 1;  // the search action whose retrieval failed
        label.description = "documents replaced with off-topic results at information step " +
                            std::to_string(k);
        done = true;
        break;
      }
      if (!done) return std::nullopt;
      detail::set_answer(t, detail::pick_distractor(t, rng));
      break;
    }

    case ErrorType::SearchError: {
      // Candidates: search actions between a reason step and their information step.
      std::vector<std::size_t> searches;
      for (std::size_t k = 2; k + 1 <= t.K(); ++k)
        if (t.action_at(k).kind == ActionKind::Search && t.action_at(k - 1).kind == ActionKind::Reason &&
            t.action_at(k + 1).kind == ActionKind::Information)
          searches.push_back(k);
      if (searches.empty()) return std::nullopt;

      std::vector<std::size_t> order = searches;
      std::shuffle(order.begin(), order.end(), rng);
      bool done = false;
      for (std::size_t k : order) {
        Trajectory attempt = t;
        const std::string& original = attempt.action_at(k).query;
        const std::string head = original.substr(0, original.find(' '));
        attempt.actions[k - 1] = Action::search(head + " details", attempt.actions[k - 1].tokens);
        attempt.actions[k] = Action::information({}, attempt.actions[k].tokens);  // dependent evidence dropped
        if (attempt.gold_evidence && detail::gold_evidence_covered(attempt)) continue;
        t = std::move(attempt);
        label.k_dagger = k - 1;  // the reason step that produced the bad query
        label.description = "under-specified query substituted at search step " + std::to_string(k);
        done = true;
        break;
      }
      if (!done) return std::nullopt;
      detail::set_answer(t, detail::pick_distractor(t, rng));
      break;
    }
  }

  t.meta["injection"] = injection_label_to_json(label);
  validate_trajectory(t);
  if (exact_match(t.predicted_answer, *t.gold_answer) != 0)
    throw InvariantError("inject_failure: corruption failed to break exact match for \"" + t.id + "\"");
  return InjectionResult{std::move(t), label};
}

}  // namespace drrag
