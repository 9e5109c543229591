// drrag command line: validate / diagnose / inject / repair / eval over
// trajectory JSONL files. Exit codes: 0 ok, 1 input error, 2 backend failure.

#include <iostream>
#include <memory>
#include <optional>

#include <CLI11.hpp>

#include "drrag/drrag.hpp"

namespace {

using namespace drrag;

struct BackendBundle {
  std::unique_ptr<ModelClient> model;
  std::unique_ptr<Retriever> retriever;
  PromptLibrary prompts = PromptLibrary::defaults();

  Backends handles() { return Backends{model.get(), retriever.get(), &prompts}; }
};

BackendBundle build_backends(const RunConfig& cfg) {
  BackendBundle b;
  if (!cfg.templates_dir.empty()) b.prompts.load_dir(cfg.templates_dir);

  std::optional<Script> script;
  if (cfg.llm_backend == "scripted" || cfg.retriever_backend == "scripted") {
    if (cfg.script_path.empty()) throw ConfigError("scripted backend requires script_path");
    script = Script::load(cfg.script_path);
  }

  if (cfg.llm_backend == "scripted") {
    b.model = std::make_unique<ScriptedModel>(*script);
  } else if (cfg.llm_backend == "http") {
    if (cfg.llm_base_url.empty())
      throw ConfigError("llm_base_url not set (flag, config file, or LLM_BASE_URL)");
    b.model = std::make_unique<OpenAiClient>(cfg.llm_base_url, cfg.llm_api_key, cfg.llm_model);
  } else {
    throw ConfigError("unknown llm_backend: \"" + cfg.llm_backend + "\" (expected http|scripted)");
  }

  if (cfg.retriever_backend == "scripted") {
    b.retriever = std::make_unique<ScriptedRetriever>(*script);
  } else if (cfg.retriever_backend == "keyword") {
    if (cfg.corpus_path.empty()) throw ConfigError("keyword retriever requires corpus_path");
    b.retriever = std::make_unique<KeywordRetriever>(KeywordRetriever::from_jsonl(cfg.corpus_path));
  } else if (cfg.retriever_backend == "http") {
    if (cfg.retriever_base_url.empty())
      throw ConfigError("retriever_base_url not set (flag, config file, or RETRIEVER_BASE_URL)");
    b.retriever = std::make_unique<HttpRetriever>(cfg.retriever_base_url);
  } else {
    throw ConfigError("unknown retriever_backend: \"" + cfg.retriever_backend +
                      "\" (expected http|keyword|scripted)");
  }
  return b;
}

void write_lines(const std::string& out_path, const std::string& content) {
  if (out_path.empty() || out_path == "-") {
    std::cout << content;
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw ConfigError("cannot write " + out_path);
  out << content;
}

int cmd_validate(const std::string& input) {
  const auto dataset = read_trajectory_jsonl(input);
  std::cerr << "ok: " << dataset.size() << " trajectories\n";
  return 0;
}

int cmd_diagnose(const std::string& input, RunConfig cfg, const std::string& out_path) {
  auto backends = build_backends(cfg);
  const auto dataset = read_trajectory_jsonl(input);
  std::string out;
  for (const auto& t : dataset) {
    if (t.gold_answer && exact_match(t.predicted_answer, *t.gold_answer) == 1) {
      out += json{{"id", t.id}, {"status", "pass"}}.dump() + "\n";
      continue;
    }
    JudgeSession judge(*backends.model, backends.prompts, t.id, cfg.llm_model);
    const Diagnosis d = diagnose(t, judge, {cfg.coverage_mode});
    json j{{"id", t.id},
           {"status", "diagnosed"},
           {"error_type", to_string(d.error_type)},
           {"k_dagger", d.k_dagger},
           {"coverage", coverage_name(d.coverage.value)},
           {"coverage_source",
            d.coverage.source == CoverageSource::OracleEvidence ? "oracle_evidence" : "judge"},
           {"diagnosis_tokens", d.diagnosis_tokens},
           {"fallback_label", d.fallback_label},
           {"fallback_localization", d.fallback_localization}};
    out += j.dump() + "\n";
  }
  write_lines(out_path, out);
  return 0;
}

int cmd_inject(const std::string& input, const std::string& type, std::uint64_t seed,
               const std::string& out_path) {
  const ErrorType target = error_type_from_string(type);
  const auto dataset = read_trajectory_jsonl(input);
  std::string out;
  std::size_t skipped = 0;
  for (const auto& t : dataset) {
    auto injected = inject_failure(t, target, seed);
    if (!injected) {
      ++skipped;
      std::cerr << "skip: " << t.id << " cannot realize a " << type << " failure\n";
      continue;
    }
    out += serialize_trajectory(injected->trajectory).dump() + "\n";
  }
  write_lines(out_path, out);
  std::cerr << "injected " << (dataset.size() - skipped) << "/" << dataset.size() << " instances\n";
  return 0;
}

int run_eval(const std::string& input, const RunConfig& cfg, bool full_report) {
  auto backends = build_backends(cfg);
  const EvalReport report = run_pipeline(input, cfg, backends.handles());
  if (full_report) {
    emit_report(report, cfg.out_dir);
  } else {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    std::string repaired, outcomes;
    for (const auto& rec : report.instances) {
      if (rec.final_trajectory) repaired += serialize_trajectory(*rec.final_trajectory).dump() + "\n";
      if (rec.attempted) {
        json o{{"id", rec.id},
               {"operator", rec.operator_name},
               {"prefix_len", rec.prefix_len},
               {"ledger", drrag::detail::ledger_to_json(rec.ledger)}};
        if (rec.diagnosis) o["diagnosis"] = drrag::detail::diagnosis_to_json(*rec.diagnosis);
        outcomes += o.dump() + "\n";
      }
    }
    write_lines((fs::path(cfg.out_dir) / "repaired.jsonl").string(), repaired);
    write_lines((fs::path(cfg.out_dir) / "outcomes.jsonl").string(), outcomes);
  }
  std::cerr << "strategy=" << report.strategy << " total=" << report.stats.total
            << " failed=" << report.stats.initially_failed << " corrected=" << report.stats.corrected
            << " repair_rate=" << report.stats.repair_rate << " mean_tokens=" << report.mean_tokens
            << "\n";
  if (report.aborted) {
    std::cerr << "aborted: " << report.abort_reason << "\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"diagnose-and-repair engine for agentic RAG trajectories"};
  app.require_subcommand(1);

  std::string config_path, templates_dir, out_path, out_dir, strategy_name, coverage_name_opt;
  std::string inject_type;
  std::uint64_t seed = 0;
  std::size_t workers = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key = value config file");
    cmd->add_option("--templates", templates_dir, "prompt template directory");
  };

  std::string input;

  auto* validate = app.add_subcommand("validate", "check a trajectory JSONL file");
  validate->add_option("input", input, "trajectory JSONL")->required();

  auto* diagnose_cmd = app.add_subcommand("diagnose", "diagnose failed trajectories");
  diagnose_cmd->add_option("input", input, "trajectory JSONL")->required();
  diagnose_cmd->add_option("--coverage", coverage_name_opt, "oracle|judge");
  diagnose_cmd->add_option("--out", out_path, "output JSONL (default stdout)");
  add_common(diagnose_cmd);

  auto* inject = app.add_subcommand("inject", "inject a synthetic failure into clean trajectories");
  inject->add_option("input", input, "clean trajectory JSONL")->required();
  inject->add_option("--type", inject_type, "format|reasoning|retriever|search")->required();
  inject->add_option("--seed", seed, "RNG seed")->required();
  inject->add_option("--out", out_path, "output JSONL (default stdout)");

  auto* repair_cmd = app.add_subcommand("repair", "repair failed trajectories");
  repair_cmd->add_option("input", input, "trajectory JSONL")->required();
  repair_cmd->add_option("--strategy", strategy_name, "drrag|rerun|stepwise|drrag-no-taxonomy|drrag-no-localization|oracle");
  repair_cmd->add_option("--out-dir", out_dir, "output directory");
  repair_cmd->add_option("--workers", workers, "worker count");
  add_common(repair_cmd);

  auto* eval = app.add_subcommand("eval", "full pipeline with report files");
  eval->add_option("input", input, "trajectory JSONL")->required();
  eval->add_option("--strategy", strategy_name, "strategy override");
  eval->add_option("--out-dir", out_dir, "output directory");
  eval->add_option("--workers", workers, "worker count");
  eval->add_option("--coverage", coverage_name_opt, "oracle|judge");
  add_common(eval);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    RunConfig cfg;
    apply_env_defaults(cfg);
    if (!config_path.empty()) load_config_file(cfg, config_path);
    if (!templates_dir.empty()) cfg.templates_dir = templates_dir;
    if (!strategy_name.empty()) cfg.strategy = strategy_from_string(strategy_name);
    if (!coverage_name_opt.empty()) cfg.coverage_mode = coverage_mode_from_string(coverage_name_opt);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (workers > 0) cfg.concurrency = workers;

    if (validate->parsed()) return cmd_validate(input);
    if (diagnose_cmd->parsed()) return cmd_diagnose(input, cfg, out_path);
    if (inject->parsed()) return cmd_inject(input, inject_type, seed, out_path);
    if (repair_cmd->parsed()) return run_eval(input, cfg, /*full_report=*/false);
    if (eval->parsed()) return run_eval(input, cfg, /*full_report=*/true);
  } catch (const BackendError& e) {
    std::cerr << "backend error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
