#pragma once

#include <cstdlib>
#include <fstream>
#include <string>

#include "drrag/pipeline.hpp"
#include "drrag/text.hpp"

namespace drrag {

inline CoverageMode coverage_mode_from_string(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (s == "oracle" || s == "oracle_evidence" || s == "oracle-evidence") return CoverageMode::OracleEvidence;
  if (s == "judge") return CoverageMode::Judge;
  throw ConfigError("unknown coverage mode: \"" + s + "\" (expected oracle|judge)");
}

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key \"" + key + "\": expected a boolean, got \"" + v + "\"");
}

inline std::size_t parse_count(const std::string& v, const std::string& key) {
  try {
    const long long n = std::stoll(v);
    if (n < 0) throw ConfigError("config key \"" + key + "\": must be non-negative");
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw ConfigError("config key \"" + key + "\": expected an integer, got \"" + v + "\"");
  }
}

}  // namespace detail

inline void apply_config_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "strategy") cfg.strategy = strategy_from_string(value);
  else if (key == "base_top_k") cfg.base_top_k = detail::parse_count(value, key);
  else if (key == "top_k_multiplier") cfg.top_k_multiplier = detail::parse_count(value, key);
  else if (key == "max_steps") cfg.max_steps = detail::parse_count(value, key);
  else if (key == "coverage_mode") cfg.coverage_mode = coverage_mode_from_string(value);
  else if (key == "concurrency") cfg.concurrency = detail::parse_count(value, key);
  else if (key == "max_repair_rounds") cfg.max_repair_rounds = detail::parse_count(value, key);
  else if (key == "noise_prefilter") cfg.noise_prefilter = detail::parse_bool(value, key);
  else if (key == "record_wall_time") cfg.record_wall_time = detail::parse_bool(value, key);
  else if (key == "abort_after_backend_failures") cfg.abort_after_backend_failures = detail::parse_count(value, key);
  else if (key == "dataset") cfg.dataset_path = value;
  else if (key == "out_dir") cfg.out_dir = value;
  else if (key == "templates_dir") cfg.templates_dir = value;
  else if (key == "llm_backend") cfg.llm_backend = value;
  else if (key == "retriever_backend") cfg.retriever_backend = value;
  else if (key == "llm_base_url") cfg.llm_base_url = value;
  else if (key == "llm_api_key") cfg.llm_api_key = value;
  else if (key == "llm_model") cfg.llm_model = value;
  else if (key == "retriever_base_url") cfg.retriever_base_url = value;
  else if (key == "script_path") cfg.script_path = value;
  else if (key == "corpus_path") cfg.corpus_path = value;
  else throw ConfigError("unknown config key: \"" + key + "\"");
}

// key = value lines; '#' comments and [section] headers are allowed and
// sections carry no meaning beyond grouping.
inline void load_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string s = trim(line);
    if (s.empty() || (s.front() == '[' && s.back() == ']')) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + " line " + std::to_string(lineno) + ": expected key = value");
    try {
      apply_config_key(cfg, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(path + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

// Environment variables seed the backend endpoints; an explicit config file
// value wins over them.
inline void apply_env_defaults(RunConfig& cfg) {
  auto env = [](const char* name) -> std::string {
    const char* v = std::getenv(name);
    return v ? v : "";
  };
  if (cfg.llm_base_url.empty()) cfg.llm_base_url = env("LLM_BASE_URL");
  if (cfg.llm_api_key.empty()) cfg.llm_api_key = env("LLM_API_KEY");
  if (cfg.llm_model.empty()) cfg.llm_model = env("LLM_MODEL");
  if (cfg.retriever_base_url.empty()) cfg.retriever_base_url = env("RETRIEVER_BASE_URL");
}

}  // namespace drrag
