#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "drrag/diagnosis.hpp"
#include "drrag/injection.hpp"
#include "drrag/metrics.hpp"
#include "drrag/repair.hpp"
#include "drrag/taxonomy.hpp"
#include "drrag/trajectory_json.hpp"

namespace drrag {

// The five coverage-gated taxonomy cells, in report order.
inline const std::vector<std::string>& taxonomy_classes() {
  static const std::vector<std::string> classes = {
      "full/format", "full/reasoning", "partial/format", "partial/retriever", "partial/search"};
  return classes;
}

inline std::string taxonomy_class(const Diagnosis& d) {
  return std::string(coverage_name(d.coverage.value)) + "/" + to_string(d.error_type);
}

struct InstanceRecord {
  std::string id;
  bool has_gold = true;
  MetricTriple before;
  MetricTriple after;
  bool initially_failed = false;
  bool attempted = false;
  bool corrected = false;
  bool skipped_noise = false;
  std::string error;  // empty when the instance completed normally
  std::optional<Diagnosis> diagnosis;
  std::optional<InjectionLabel> truth;
  std::string truth_class;  // taxonomy cell of the injected label, if any
  std::string operator_name;
  CostLedger ledger;
  std::size_t prefix_len = 0;
  std::size_t retrieval_calls = 0;
  std::string repaired_answer;
  std::vector<std::string> flags;
  std::optional<Trajectory> final_trajectory;  // repaired when attempted, original otherwise
};

struct PerTypeRow {
  std::size_t attempted = 0;
  std::size_t corrected = 0;

  double repair_rate() const {
    return attempted == 0 ? 0.0 : static_cast<double>(corrected) / static_cast<double>(attempted);
  }
};

struct EvalReport {
  std::string strategy;
  json config_echo = json::object();
  std::vector<InstanceRecord> instances;
  RepairStats stats;
  double mean_tokens = 0.0;     // over attempted instances
  double mean_wall_ms = 0.0;    // over attempted instances
  std::size_t error_count = 0;
  std::size_t noise_skipped = 0;
  bool aborted = false;
  std::string abort_reason;
  std::map<std::string, PerTypeRow> per_type;                          // by diagnosed class
  std::map<std::string, std::map<std::string, std::size_t>> confusion;  // truth class -> diagnosed class
  std::map<std::string, std::size_t> truth_counts;                      // row sums of the confusion matrix
};

namespace detail {

inline std::string fmt1(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

inline json metric_to_json(const MetricTriple& m) {
  return json{{"em", m.em}, {"f1", m.f1}, {"rouge_l", m.rouge_l}};
}

inline json ledger_to_json(const CostLedger& l) {
  return json{{"diagnosis_tokens", l.diagnosis_tokens},
              {"repair_tokens", l.repair_tokens},
              {"total_tokens", l.total_tokens()},
              {"retrieval_calls", l.retrieval_calls},
              {"wall_time_ms", l.wall_time_ms}};
}

inline json diagnosis_to_json(const Diagnosis& d) {
  return json{{"error_type", to_string(d.error_type)},
              {"k_dagger", d.k_dagger},
              {"coverage", coverage_name(d.coverage.value)},
              {"coverage_source", d.coverage.source == CoverageSource::OracleEvidence ? "oracle_evidence" : "judge"},
              {"fallback_label", d.fallback_label},
              {"fallback_localization", d.fallback_localization},
              {"diagnosis_tokens", d.diagnosis_tokens},
              {"rationale", d.rationale}};
}

}  // namespace detail

inline json instance_to_json(const InstanceRecord& r) {
  json j{{"id", r.id},
         {"has_gold", r.has_gold},
         {"before", detail::metric_to_json(r.before)},
         {"after", detail::metric_to_json(r.after)},
         {"initially_failed", r.initially_failed},
         {"attempted", r.attempted},
         {"corrected", r.corrected},
         {"skipped_noise", r.skipped_noise},
         {"error", r.error},
         {"operator", r.operator_name},
         {"ledger", detail::ledger_to_json(r.ledger)},
         {"prefix_len", r.prefix_len},
         {"retrieval_calls", r.retrieval_calls},
         {"repaired_answer", r.repaired_answer},
         {"flags", r.flags}};
  if (r.diagnosis) j["diagnosis"] = detail::diagnosis_to_json(*r.diagnosis);
  if (r.truth) {
    j["truth"] = injection_label_to_json(*r.truth);
    j["truth_class"] = r.truth_class;
  }
  return j;
}

inline json report_to_json(const EvalReport& r) {
  json per_type = json::object();
  for (const auto& [cls, row] : r.per_type)
    per_type[cls] = json{{"attempted", row.attempted},
                         {"corrected", row.corrected},
                         {"repair_rate", row.repair_rate()}};
  json confusion = json::object();
  for (const auto& [truth, cols] : r.confusion) {
    json row = json::object();
    for (const auto& [pred, count] : cols) row[pred] = count;
    confusion[truth] = std::move(row);
  }
  json instances = json::array();
  for (const auto& i : r.instances) instances.push_back(instance_to_json(i));

  return json{{"strategy", r.strategy},
              {"config", r.config_echo},
              {"aggregates",
               json{{"total", r.stats.total},
                    {"initially_failed", r.stats.initially_failed},
                    {"corrected", r.stats.corrected},
                    {"repair_rate", r.stats.repair_rate},
                    {"delta_em", r.stats.delta_em},
                    {"delta_f1", r.stats.delta_f1},
                    {"delta_rouge_l", r.stats.delta_rouge_l},
                    {"mean_tokens", r.mean_tokens},
                    {"mean_wall_time_ms", r.mean_wall_ms},
                    {"errors", r.error_count},
                    {"noise_skipped", r.noise_skipped},
                    {"aborted", r.aborted},
                    {"abort_reason", r.abort_reason}}},
              {"per_type", std::move(per_type)},
              {"confusion", std::move(confusion)},
              {"truth_counts", r.truth_counts},
              {"instances", std::move(instances)}};
}

inline std::string summary_markdown(const EvalReport& r) {
  using detail::fmt1;
  std::string out;
  out += "# Repair evaluation summary\n\n";
  if (r.aborted) out += "**Aborted:** " + r.abort_reason + " (partial results below)\n\n";
  out += "| Strategy | Instances | Failed | Corrected | Tokens | Repair Rate | dEM | dF1 | dR-L |\n";
  out += "|---|---|---|---|---|---|---|---|---|\n";
  out += "| " + r.strategy + " | " + std::to_string(r.stats.total) + " | " +
         std::to_string(r.stats.initially_failed) + " | " + std::to_string(r.stats.corrected) + " | " +
         fmt1(r.mean_tokens) + " | " + fmt1(100.0 * r.stats.repair_rate) + " | " + fmt1(r.stats.delta_em) +
         " | " + fmt1(r.stats.delta_f1) + " | " + fmt1(r.stats.delta_rouge_l) + " |\n";
  out += "\n## Repair rate by diagnosed type\n\n";
  out += "| Coverage | Error type | Attempted | Corrected | Repair rate |\n|---|---|---|---|---|\n";
  for (const auto& cls : taxonomy_classes()) {
    auto it = r.per_type.find(cls);
    const PerTypeRow row = it == r.per_type.end() ? PerTypeRow{} : it->second;
    const auto slash = cls.find('/');
    out += "| " + cls.substr(0, slash) + " | " + cls.substr(slash + 1) + " | " +
           std::to_string(row.attempted) + " | " + std::to_string(row.corrected) + " | " +
           fmt1(100.0 * row.repair_rate()) + " |\n";
  }
  if (r.per_type.count("undiagnosed")) {
    const auto& row = r.per_type.at("undiagnosed");
    out += "| - | undiagnosed | " + std::to_string(row.attempted) + " | " + std::to_string(row.corrected) +
           " | " + fmt1(100.0 * row.repair_rate()) + " |\n";
  }
  return out;
}

inline std::string per_type_csv(const EvalReport& r) {
  std::string out = "coverage,error_type,attempted,corrected,repair_rate\n";
  auto emit = [&](const std::string& cls, const PerTypeRow& row) {
    const auto slash = cls.find('/');
    const std::string cov = slash == std::string::npos ? "-" : cls.substr(0, slash);
    const std::string et = slash == std::string::npos ? cls : cls.substr(slash + 1);
    out += cov + "," + et + "," + std::to_string(row.attempted) + "," + std::to_string(row.corrected) +
           "," + detail::fmt1(100.0 * row.repair_rate()) + "\n";
  };
  for (const auto& cls : taxonomy_classes()) {
    auto it = r.per_type.find(cls);
    emit(cls, it == r.per_type.end() ? PerTypeRow{} : it->second);
  }
  if (r.per_type.count("undiagnosed")) emit("undiagnosed", r.per_type.at("undiagnosed"));
  return out;
}

inline std::string confusion_csv(const EvalReport& r) {
  std::string out = "truth";
  for (const auto& cls : taxonomy_classes()) out += "," + cls;
  out += "\n";
  for (const auto& truth : taxonomy_classes()) {
    out += truth;
    auto row_it = r.confusion.find(truth);
    for (const auto& pred : taxonomy_classes()) {
      std::size_t n = 0;
      if (row_it != r.confusion.end()) {
        auto it = row_it->second.find(pred);
        if (it != row_it->second.end()) n = it->second;
      }
      out += "," + std::to_string(n);
    }
    out += "\n";
  }
  return out;
}

// Writes report.json, summary.md, per_type.csv, confusion.csv plus the
// repaired trajectories and per-instance outcome sidecar.
inline void emit_report(const EvalReport& report, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + out_dir + ": " + ec.message());

  auto write_file = [&](const std::string& name, const std::string& content) {
    const std::string path = (fs::path(out_dir) / name).string();
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    out << content;
  };

  write_file("report.json", report_to_json(report).dump(2) + "\n");
  write_file("summary.md", summary_markdown(report));
  write_file("per_type.csv", per_type_csv(report));
  write_file("confusion.csv", confusion_csv(report));

  std::string repaired;
  std::string outcomes;
  for (const auto& rec : report.instances) {
    if (rec.final_trajectory) repaired += serialize_trajectory(*rec.final_trajectory).dump() + "\n";
    if (rec.attempted) {
      json o{{"id", rec.id},
             {"operator", rec.operator_name},
             {"prefix_len", rec.prefix_len},
             {"ledger", detail::ledger_to_json(rec.ledger)}};
      if (rec.diagnosis) o["diagnosis"] = detail::diagnosis_to_json(*rec.diagnosis);
      outcomes += o.dump() + "\n";
    }
  }
  write_file("repaired.jsonl", repaired);
  write_file("outcomes.jsonl", outcomes);
}

}  // namespace drrag
