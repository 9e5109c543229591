#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "drrag/drrag.hpp"
#include "support/test_support.hpp"

using namespace drrag;
namespace fs = std::filesystem;
using drrag::testing::make_injected_benchmark;

namespace {

struct CliResult {
  int exit_code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

CliResult run_cli(const std::string& args, const fs::path& workdir) {
  const fs::path out = workdir / "stdout.txt";
  const fs::path err = workdir / "stderr.txt";
  const std::string cmd = std::string(DRRAG_CLI_PATH) + " " + args + " > " + out.string() + " 2> " +
                          err.string();
  const int raw = std::system(cmd.c_str());
  return CliResult{WEXITSTATUS(raw), slurp(out), slurp(err)};
}

struct CliWorkspace {
  fs::path dir;
  fs::path dataset;
  fs::path script;
  fs::path config;

  explicit CliWorkspace(const std::string& name, Strategy strategy, const Script& script_data,
                        const std::vector<Trajectory>& instances, std::size_t workers = 1) {
    dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    dataset = dir / "dataset.jsonl";
    write_trajectory_jsonl(dataset.string(), instances);
    script = dir / "script.json";
    std::ofstream(script) << script_data.to_json().dump();
    config = dir / "run.cfg";
    std::ofstream(config) << "strategy = " << to_string(strategy) << "\n"
                          << "llm_backend = scripted\n"
                          << "retriever_backend = scripted\n"
                          << "script_path = " << script.string() << "\n"
                          << "coverage_mode = oracle\n"
                          << "record_wall_time = false\n"
                          << "concurrency = " << workers << "\n";
  }
  ~CliWorkspace() { fs::remove_all(dir); }
};

}  // namespace

TEST_CASE("cli: validate accepts good files and reports bad lines") {
  const fs::path dir = fs::temp_directory_path() / "drrag_cli_validate";
  fs::remove_all(dir);
  fs::create_directories(dir);

  write_trajectory_jsonl((dir / "good.jsonl").string(), {drrag::testing::make_clean_fixture(0)});
  CHECK(run_cli("validate " + (dir / "good.jsonl").string(), dir).exit_code == 0);

  std::ofstream(dir / "bad.jsonl") << "{\"id\": \"x\"}\n";
  const CliResult bad = run_cli("validate " + (dir / "bad.jsonl").string(), dir);
  CHECK(bad.exit_code == 1);
  CHECK(bad.err.find("line 1") != std::string::npos);

  CHECK(run_cli("validate " + (dir / "missing.jsonl").string(), dir).exit_code == 1);
  fs::remove_all(dir);
}

TEST_CASE("cli: unknown flags exit with usage") {
  const fs::path dir = fs::temp_directory_path() / "drrag_cli_flags";
  fs::remove_all(dir);
  fs::create_directories(dir);
  CHECK(run_cli("validate --frobnicate x.jsonl", dir).exit_code == 1);
  CHECK(run_cli("mystery-subcommand", dir).exit_code == 1);
  fs::remove_all(dir);
}

TEST_CASE("cli: inject is deterministic at the byte level") {
  const fs::path dir = fs::temp_directory_path() / "drrag_cli_inject";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::vector<Trajectory> clean;
  for (int i = 0; i < 4; ++i) clean.push_back(drrag::testing::make_clean_fixture(i));
  write_trajectory_jsonl((dir / "clean.jsonl").string(), clean);

  const std::string args = "inject " + (dir / "clean.jsonl").string() + " --type format --seed 7 --out ";
  CHECK(run_cli(args + (dir / "a.jsonl").string(), dir).exit_code == 0);
  CHECK(run_cli(args + (dir / "b.jsonl").string(), dir).exit_code == 0);
  const std::string a = slurp(dir / "a.jsonl");
  CHECK(a == slurp(dir / "b.jsonl"));
  CHECK(!a.empty());

  const auto injected = read_trajectory_jsonl((dir / "a.jsonl").string());
  REQUIRE(injected.size() == 4);
  for (const auto& t : injected) {
    CHECK(exact_match(t.predicted_answer, *t.gold_answer) == 0);
    CHECK(injection_label_of(t).has_value());
  }
  fs::remove_all(dir);
}

TEST_CASE("cli: eval with a scripted backend writes the full report") {
  const auto bench = make_injected_benchmark();
  CliWorkspace ws("drrag_cli_eval", Strategy::DrRag, bench.drrag_script, bench.instances);

  const CliResult res = run_cli("eval " + ws.dataset.string() + " --config " + ws.config.string() +
                                    " --out-dir " + (ws.dir / "out").string(),
                                ws.dir);
  CHECK(res.exit_code == 0);
  for (const char* name :
       {"report.json", "summary.md", "per_type.csv", "confusion.csv", "repaired.jsonl", "outcomes.jsonl"})
    CHECK(fs::exists(ws.dir / "out" / name));

  const json report = json::parse(slurp(ws.dir / "out" / "report.json"));
  CHECK(report.at("strategy") == "drrag");
  CHECK(report.at("aggregates").at("corrected") == bench.expected_drrag_corrected);
}

TEST_CASE("cli: eval aggregates are identical for 1 and 8 workers") {
  const auto bench = make_injected_benchmark();
  CliWorkspace ws1("drrag_cli_workers1", Strategy::DrRag, bench.drrag_script, bench.instances, 1);
  CliWorkspace ws8("drrag_cli_workers8", Strategy::DrRag, bench.drrag_script, bench.instances, 8);

  REQUIRE(run_cli("eval " + ws1.dataset.string() + " --config " + ws1.config.string() + " --out-dir " +
                      (ws1.dir / "out").string(),
                  ws1.dir)
              .exit_code == 0);
  REQUIRE(run_cli("eval " + ws8.dataset.string() + " --config " + ws8.config.string() + " --out-dir " +
                      (ws8.dir / "out").string(),
                  ws8.dir)
              .exit_code == 0);
  json r1 = json::parse(slurp(ws1.dir / "out" / "report.json"));
  json r8 = json::parse(slurp(ws8.dir / "out" / "report.json"));
  r1.erase("config");
  r8.erase("config");
  CHECK(r1 == r8);
}

TEST_CASE("cli: repair writes repaired trajectories and outcome records") {
  const auto bench = make_injected_benchmark();
  CliWorkspace ws("drrag_cli_repair", Strategy::Oracle, bench.oracle_script, bench.instances);

  const CliResult res = run_cli("repair " + ws.dataset.string() + " --config " + ws.config.string() +
                                    " --out-dir " + (ws.dir / "out").string(),
                                ws.dir);
  CHECK(res.exit_code == 0);
  const auto repaired = read_trajectory_jsonl((ws.dir / "out" / "repaired.jsonl").string());
  CHECK(repaired.size() == bench.instances.size());
  std::size_t corrected = 0;
  for (const auto& t : repaired)
    if (t.gold_answer && exact_match(t.predicted_answer, *t.gold_answer) == 1) ++corrected;
  CHECK(corrected == bench.instances.size());

  std::istringstream outcomes(slurp(ws.dir / "out" / "outcomes.jsonl"));
  std::string line;
  std::size_t n = 0;
  while (std::getline(outcomes, line)) {
    const json o = json::parse(line);
    CHECK(o.contains("operator"));
    CHECK(o.contains("prefix_len"));
    ++n;
  }
  CHECK(n == bench.instances.size());
}

TEST_CASE("cli: diagnose emits one record per instance") {
  const auto bench = make_injected_benchmark();
  std::vector<Trajectory> small(bench.instances.begin(), bench.instances.begin() + 3);
  small.push_back(drrag::testing::make_clean_fixture(0));  // a passing instance
  CliWorkspace ws("drrag_cli_diagnose", Strategy::DrRag, bench.drrag_script, small);

  const CliResult res = run_cli("diagnose " + ws.dataset.string() + " --config " + ws.config.string() +
                                    " --coverage oracle --out " + (ws.dir / "diag.jsonl").string(),
                                ws.dir);
  REQUIRE(res.exit_code == 0);
  std::istringstream lines(slurp(ws.dir / "diag.jsonl"));
  std::string line;
  std::size_t diagnosed = 0, passed = 0;
  while (std::getline(lines, line)) {
    const json j = json::parse(line);
    if (j.at("status") == "pass") ++passed;
    else {
      CHECK(j.contains("error_type"));
      CHECK(j.contains("k_dagger"));
      ++diagnosed;
    }
  }
  CHECK(diagnosed == 3);
  CHECK(passed == 1);
}

// Optional live-mode smoke test, hidden by default. Run explicitly with
//   LLM_BASE_URL=http://... ./drrag_cli_tests "[live]"
// against any OpenAI-compatible endpoint; the retriever is the bundled
// keyword index over the toy corpus.
TEST_CASE("cli: live smoke against a chat-completions endpoint", "[.][live]") {
  const char* base = std::getenv("LLM_BASE_URL");
  REQUIRE(base != nullptr);

  const fs::path dir = fs::temp_directory_path() / "drrag_cli_live";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path config = dir / "run.cfg";
  std::ofstream(config) << "strategy = drrag\n"
                        << "llm_backend = http\n"
                        << "retriever_backend = keyword\n"
                        << "corpus_path = " << (fs::path(DRRAG_DATA_DIR) / "corpus" / "toy_corpus.jsonl").string()
                        << "\n";

  const CliResult res = run_cli("eval " + (fs::path(DRRAG_DATA_DIR) / "fixtures" / "pulandian.jsonl").string() +
                                    " --config " + config.string() + " --out-dir " + (dir / "out").string(),
                                dir);
  INFO(res.err);
  CHECK(res.exit_code == 0);
  CHECK(fs::exists(dir / "out" / "report.json"));
  const json report = json::parse(slurp(dir / "out" / "report.json"));
  CHECK(report.at("instances").size() == 1);
  fs::remove_all(dir);
}

TEST_CASE("cli: backend failures exit with code 2") {
  const auto bench = make_injected_benchmark();
  std::vector<Trajectory> small(bench.instances.begin(), bench.instances.begin() + 2);

  const fs::path dir = fs::temp_directory_path() / "drrag_cli_backendfail";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path dataset = dir / "dataset.jsonl";
  write_trajectory_jsonl(dataset.string(), small);
  const fs::path config = dir / "run.cfg";
  std::ofstream(config) << "strategy = rerun\n"
                        << "llm_backend = http\n"
                        << "llm_base_url = http://127.0.0.1:1\n"
                        << "retriever_backend = scripted\n"
                        << "script_path = " << (dir / "script.json").string() << "\n"
                        << "abort_after_backend_failures = 1\n"
                        << "record_wall_time = false\n";
  std::ofstream(dir / "script.json") << Script{}.to_json().dump();

  const CliResult res = run_cli("eval " + dataset.string() + " --config " + config.string() +
                                    " --out-dir " + (dir / "out").string(),
                                dir);
  CHECK(res.exit_code == 2);
  fs::remove_all(dir);
}
