#pragma once

#include <atomic>
#include <chrono>
#include <string>
#include <thread>
#include <vector>

#include "drrag/agent.hpp"
#include "drrag/backends.hpp"
#include "drrag/diagnosis.hpp"
#include "drrag/injection.hpp"
#include "drrag/metrics.hpp"
#include "drrag/prompts.hpp"
#include "drrag/repair.hpp"
#include "drrag/report.hpp"
#include "drrag/trajectory_json.hpp"

namespace drrag {

enum class Strategy { DrRag, Rerun, Stepwise, DrRagNoTaxonomy, DrRagNoLocalization, Oracle };

inline const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::DrRag: return "drrag";
    case Strategy::Rerun: return "rerun";
    case Strategy::Stepwise: return "stepwise";
    case Strategy::DrRagNoTaxonomy: return "drrag-no-taxonomy";
    case Strategy::DrRagNoLocalization: return "drrag-no-localization";
    case Strategy::Oracle: return "oracle";
  }
  return "unknown";
}

inline Strategy strategy_from_string(std::string s) {
  for (auto& c : s) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (c == '_') c = '-';
  }
  if (s == "drrag") return Strategy::DrRag;
  if (s == "rerun") return Strategy::Rerun;
  if (s == "stepwise") return Strategy::Stepwise;
  if (s == "drrag-no-taxonomy") return Strategy::DrRagNoTaxonomy;
  if (s == "drrag-no-localization") return Strategy::DrRagNoLocalization;
  if (s == "oracle") return Strategy::Oracle;
  throw ConfigError("unknown strategy: \"" + s + "\"");
}

struct RunConfig {
  Strategy strategy = Strategy::DrRag;
  std::size_t base_top_k = 5;
  std::size_t top_k_multiplier = 2;
  std::size_t max_steps = 10;
  CoverageMode coverage_mode = CoverageMode::OracleEvidence;
  std::size_t concurrency = 1;
  std::size_t max_repair_rounds = 1;
  bool noise_prefilter = false;
  bool record_wall_time = true;
  std::size_t abort_after_backend_failures = 5;

  // Paths and endpoints; consumed by the CLI when wiring live backends.
  std::string dataset_path;
  std::string out_dir = "out";
  std::string templates_dir;
  std::string llm_backend = "http";        // http | scripted
  std::string retriever_backend = "http";  // http | scripted | keyword
  std::string llm_base_url;
  std::string llm_api_key;
  std::string llm_model;
  std::string retriever_base_url;
  std::string script_path;
  std::string corpus_path;
};

inline void validate_config(const RunConfig& c) {
  if (c.base_top_k < 1) throw ConfigError("base_top_k must be >= 1");
  if (c.top_k_multiplier < 1) throw ConfigError("top_k_multiplier must be >= 1");
  if (c.max_steps < 1) throw ConfigError("max_steps must be >= 1");
  if (c.concurrency < 1) throw ConfigError("concurrency must be >= 1");
  if (c.max_repair_rounds < 1) throw ConfigError("max_repair_rounds must be >= 1");
}

inline json config_echo_json(const RunConfig& c) {
  return json{{"strategy", to_string(c.strategy)},
              {"base_top_k", c.base_top_k},
              {"top_k_multiplier", c.top_k_multiplier},
              {"max_steps", c.max_steps},
              {"coverage_mode", c.coverage_mode == CoverageMode::OracleEvidence ? "oracle" : "judge"},
              {"concurrency", c.concurrency},
              {"max_repair_rounds", c.max_repair_rounds},
              {"noise_prefilter", c.noise_prefilter}};
}

// Handles a pipeline run talks to. The judge and the repair model are the
// same endpoint, matching a single-backbone deployment.
struct Backends {
  ModelClient* model = nullptr;
  Retriever* retriever = nullptr;
  const PromptLibrary* prompts = nullptr;
};

namespace detail {

inline RepairOutcome apply_selected_operator(const Trajectory& t, const Diagnosis& d,
                                             const Backends& b, const RunConfig& cfg) {
  switch (select_operator(d.error_type)) {
    case RepairOperatorId::AnswerRewrite:
      return repair_format(t, *b.model, *b.prompts, cfg.llm_model);
    case RepairOperatorId::EvidenceGroundedReReason:
      return repair_reasoning(t, d.k_dagger, *b.model, *b.prompts, cfg.max_steps, cfg.llm_model);
    case RepairOperatorId::QueryRewriteTopK:
      return repair_retriever(t, d.k_dagger, *b.model, *b.retriever, cfg.base_top_k,
                              cfg.top_k_multiplier, *b.prompts, cfg.llm_model);
    case RepairOperatorId::PlanBasedRepair:
      return repair_search(t, d.k_dagger, *b.model, *b.retriever, *b.prompts, cfg.base_top_k,
                           cfg.max_steps, cfg.llm_model);
  }
  throw InvariantError("apply_selected_operator: unreachable");
}

inline bool question_is_noise(const Trajectory& t, const Backends& b, const RunConfig& cfg,
                              std::uint64_t& tokens) {
  PromptSession session(*b.model, *b.prompts, t.id, cfg.llm_model);
  const ModelReply reply = session.ask("noise-screen", {{"question", t.question}});
  tokens += session.tokens();
  const std::string flat = squash(reply.content);
  return flat.find("unanswerable") != std::string::npos;
}

}  // namespace detail

// Diagnose-and-repair for a single failed trajectory under one strategy.
// Returns the record; never throws for per-instance failures.
inline InstanceRecord process_instance(const Trajectory& t, const RunConfig& cfg, const Backends& b) {
  InstanceRecord rec;
  rec.id = t.id;
  rec.truth = injection_label_of(t);

  if (!t.gold_answer) {
    rec.has_gold = false;
    rec.error = "missing gold answer";
    rec.final_trajectory = t;
    return rec;
  }
  const std::string& gold = *t.gold_answer;
  rec.before = score_answer(t.predicted_answer, gold);
  rec.after = rec.before;
  rec.final_trajectory = t;
  if (rec.truth) {
    try {
      rec.truth_class = taxonomy_class(oracle_diagnose(t, *rec.truth));
    } catch (const Error&) {
      rec.truth_class.clear();
    }
  }
  if (rec.before.em == 1) return rec;  // untouched pass-through

  rec.initially_failed = true;
  const auto start = std::chrono::steady_clock::now();

  try {
    if (cfg.noise_prefilter) {
      std::uint64_t noise_tokens = 0;
      const bool noise = detail::question_is_noise(t, b, cfg, noise_tokens);
      rec.ledger.diagnosis_tokens += noise_tokens;
      if (noise) {
        rec.skipped_noise = true;
        return rec;
      }
    }

    rec.attempted = true;
    Trajectory current = t;
    for (std::size_t round = 1; round <= cfg.max_repair_rounds; ++round) {
      RepairOutcome outcome;
      switch (cfg.strategy) {
        case Strategy::Rerun: {
          AgentHandle agent{b.model, b.retriever, b.prompts,
                            {cfg.max_steps, cfg.base_top_k, cfg.llm_model}};
          outcome = rerun_baseline(current, agent);
          break;
        }
        case Strategy::Stepwise: {
          AgentHandle agent{b.model, b.retriever, b.prompts,
                            {cfg.max_steps, cfg.base_top_k, cfg.llm_model}};
          outcome = stepwise_retry_baseline(current, *b.model, agent, cfg.llm_model);
          break;
        }
        case Strategy::Oracle: {
          if (!rec.truth)
            throw ConfigError("oracle strategy requires injection labels (instance \"" + t.id + "\")");
          const Diagnosis d = oracle_diagnose(current, *rec.truth);
          rec.diagnosis = d;
          outcome = detail::apply_selected_operator(current, d, b, cfg);
          break;
        }
        case Strategy::DrRag:
        case Strategy::DrRagNoTaxonomy:
        case Strategy::DrRagNoLocalization: {
          JudgeSession judge(*b.model, *b.prompts, current.id, cfg.llm_model);
          const Diagnosis d = diagnose(current, judge, {cfg.coverage_mode});
          rec.diagnosis = d;
          if (cfg.strategy == Strategy::DrRag) {
            outcome = detail::apply_selected_operator(current, d, b, cfg);
          } else {
            const AblationMode mode = cfg.strategy == Strategy::DrRagNoTaxonomy
                                          ? AblationMode::NoTaxonomy
                                          : AblationMode::NoLocalization;
            outcome = ablation_repair(current, d, mode, *b.model, *b.retriever, *b.prompts,
                                      cfg.base_top_k, cfg.top_k_multiplier, cfg.max_steps, cfg.llm_model);
          }
          outcome.ledger.diagnosis_tokens += d.diagnosis_tokens;
          break;
        }
      }

      rec.ledger += outcome.ledger;
      rec.operator_name = outcome.operator_name;
      rec.prefix_len = outcome.prefix_len;
      rec.retrieval_calls = outcome.retrieval_calls;
      rec.repaired_answer = outcome.new_predicted_answer;
      rec.flags.insert(rec.flags.end(), outcome.flags.begin(), outcome.flags.end());
      rec.final_trajectory = outcome.repaired;
      current = outcome.repaired;

      rec.after = score_answer(outcome.new_predicted_answer, gold);
      if (rec.after.em == 1) break;
    }
    rec.corrected = rec.after.em == 1;
  } catch (const BackendError& e) {
    rec.error = std::string("backend: ") + e.what();
    rec.after = rec.before;
    rec.corrected = false;
  } catch (const Error& e) {
    rec.error = e.what();
    rec.after = rec.before;  // failed repairs leave the instance uncorrected
    rec.corrected = false;
  }

  if (cfg.record_wall_time) {
    const auto elapsed = std::chrono::steady_clock::now() - start;
    rec.ledger.wall_time_ms =
        static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count());
  }
  return rec;
}

namespace detail {

inline void aggregate_report(EvalReport& report, const RunConfig& cfg) {
  std::vector<MetricTriple> before, after;
  std::uint64_t tokens = 0, wall = 0;
  std::size_t attempted = 0;
  for (const auto& rec : report.instances) {
    if (!rec.error.empty()) ++report.error_count;
    if (rec.skipped_noise) {
      ++report.noise_skipped;
      continue;
    }
    if (!rec.has_gold) continue;
    before.push_back(rec.before);
    after.push_back(rec.after);
    if (rec.attempted) {
      ++attempted;
      tokens += rec.ledger.total_tokens();
      wall += rec.ledger.wall_time_ms;
    }
    if (rec.diagnosis) {
      const std::string cls = taxonomy_class(*rec.diagnosis);
      auto& row = report.per_type[cls];
      ++row.attempted;
      if (rec.corrected) ++row.corrected;
      const std::string truth = rec.truth_class.empty() ? cls : rec.truth_class;
      ++report.confusion[truth][cls];
      ++report.truth_counts[truth];
    } else if (rec.attempted) {
      auto& row = report.per_type["undiagnosed"];
      ++row.attempted;
      if (rec.corrected) ++row.corrected;
    }
  }
  report.stats = repair_stats(before, after);
  if (attempted > 0) {
    report.mean_tokens = static_cast<double>(tokens) / static_cast<double>(attempted);
    report.mean_wall_ms = static_cast<double>(wall) / static_cast<double>(attempted);
  }
  report.config_echo = config_echo_json(cfg);
}

}  // namespace detail

// Batch evaluation: failed instances (EM = 0) run the configured strategy,
// correct ones pass through untouched. Per-instance errors are recorded and
// never abort the batch; a run of consecutive backend failures does, with
// whatever was finished kept in the report.
inline EvalReport run_pipeline(const std::vector<Trajectory>& dataset, const RunConfig& cfg,
                               const Backends& backends) {
  validate_config(cfg);
  if (!backends.model || !backends.retriever || !backends.prompts)
    throw ConfigError("run_pipeline: backends are incomplete");

  EvalReport report;
  report.strategy = to_string(cfg.strategy);
  report.instances.resize(dataset.size());

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> consecutive_backend_failures{0};
  std::atomic<bool> aborted{false};

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= dataset.size()) break;
      if (aborted.load()) {
        InstanceRecord rec;
        rec.id = dataset[i].id;
        rec.error = "skipped: batch aborted";
        rec.final_trajectory = dataset[i];
        if (dataset[i].gold_answer) {
          rec.before = score_answer(dataset[i].predicted_answer, *dataset[i].gold_answer);
          rec.after = rec.before;
          rec.initially_failed = rec.before.em == 0;
        } else {
          rec.has_gold = false;
        }
        report.instances[i] = std::move(rec);
        continue;
      }
      InstanceRecord rec = process_instance(dataset[i], cfg, backends);
      const bool backend_failure = rec.error.rfind("backend: ", 0) == 0;
      if (backend_failure) {
        if (consecutive_backend_failures.fetch_add(1) + 1 >= cfg.abort_after_backend_failures)
          aborted.store(true);
      } else {
        consecutive_backend_failures.store(0);
      }
      report.instances[i] = std::move(rec);
    }
  };

  const std::size_t n_workers = std::min(cfg.concurrency, std::max<std::size_t>(dataset.size(), 1));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(n_workers);
    for (std::size_t i = 0; i < n_workers; ++i) threads.emplace_back(worker);
    for (auto& th : threads) th.join();
  }

  if (aborted.load()) {
    report.aborted = true;
    report.abort_reason = "backend failed " + std::to_string(cfg.abort_after_backend_failures) +
                          " times in a row; remaining instances skipped";
  }
  detail::aggregate_report(report, cfg);
  return report;
}

inline EvalReport run_pipeline(const std::string& dataset_path, const RunConfig& cfg,
                               const Backends& backends) {
  return run_pipeline(read_trajectory_jsonl(dataset_path), cfg, backends);
}

}  // namespace drrag
