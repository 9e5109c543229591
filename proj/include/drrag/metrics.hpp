#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "drrag/errors.hpp"

namespace drrag {

// Answer normalization for exact match: lowercase, strip punctuation, drop
// the articles a/an/the as whole words, collapse whitespace.
inline std::string normalize_answer(const std::string& text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (unsigned char c : text) {
    if (std::ispunct(c)) continue;
    cleaned.push_back(static_cast<char>(std::tolower(c)));
  }
  std::istringstream in(cleaned);
  std::string tok, out;
  while (in >> tok) {
    if (tok == "a" || tok == "an" || tok == "the") continue;
    if (!out.empty()) out.push_back(' ');
    out += tok;
  }
  return out;
}

// Tokenization for the overlap metrics (F1, ROUGE-L): lowercase and strip
// punctuation but keep articles, so token positions survive intact.
inline std::vector<std::string> overlap_tokens(const std::string& text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (unsigned char c : text) {
    if (std::ispunct(c)) continue;
    cleaned.push_back(static_cast<char>(std::tolower(c)));
  }
  std::istringstream in(cleaned);
  std::vector<std::string> toks;
  std::string tok;
  while (in >> tok) toks.push_back(tok);
  return toks;
}

inline int exact_match(const std::string& pred, const std::string& gold) {
  return normalize_answer(pred) == normalize_answer(gold) ? 1 : 0;
}

// Token-level F1 with multiset intersection. Two empty token lists score 1,
// exactly one empty scores 0.
inline double token_f1(const std::string& pred, const std::string& gold) {
  const auto p = overlap_tokens(pred);
  const auto g = overlap_tokens(gold);
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;

  std::unordered_map<std::string, std::size_t> gold_counts;
  for (const auto& t : g) ++gold_counts[t];
  std::size_t overlap = 0;
  for (const auto& t : p) {
    auto it = gold_counts.find(t);
    if (it != gold_counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double precision = static_cast<double>(overlap) / static_cast<double>(p.size());
  const double recall = static_cast<double>(overlap) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

inline std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = (a[i - 1] == b[j - 1]) ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// ROUGE-L F-measure with beta = 1 (harmonic mean of LCS precision/recall).
inline double rouge_l(const std::string& pred, const std::string& gold) {
  const auto p = overlap_tokens(pred);
  const auto g = overlap_tokens(gold);
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;
  const std::size_t lcs = lcs_length(p, g);
  if (lcs == 0) return 0.0;
  const double precision = static_cast<double>(lcs) / static_cast<double>(p.size());
  const double recall = static_cast<double>(lcs) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

struct MetricTriple {
  int em = 0;
  double f1 = 0.0;
  double rouge_l = 0.0;

  friend bool operator==(const MetricTriple&, const MetricTriple&) = default;
};

inline MetricTriple score_answer(const std::string& pred, const std::string& gold) {
  return MetricTriple{exact_match(pred, gold), token_f1(pred, gold), rouge_l(pred, gold)};
}

// Aggregate repair statistics. repair_rate is a fraction in [0,1]; the
// delta_* fields are percentage points.
struct RepairStats {
  std::size_t total = 0;
  std::size_t initially_failed = 0;
  std::size_t corrected = 0;
  double repair_rate = 0.0;
  double delta_em = 0.0;
  double delta_f1 = 0.0;
  double delta_rouge_l = 0.0;

  friend bool operator==(const RepairStats&, const RepairStats&) = default;
};

inline RepairStats repair_stats(const std::vector<MetricTriple>& before,
                                const std::vector<MetricTriple>& after) {
  if (before.size() != after.size())
    throw InvariantError("repair_stats: before/after length mismatch (" + std::to_string(before.size()) +
                         " vs " + std::to_string(after.size()) + ")");
  RepairStats s;
  s.total = before.size();
  double f1_before = 0, f1_after = 0, rl_before = 0, rl_after = 0;
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (before[i].em == 1 && !(after[i] == before[i]))
      throw InvariantError("repair_stats: instance " + std::to_string(i) +
                           " was already correct but its metrics changed");
    if (before[i].em == 0) {
      ++s.initially_failed;
      if (after[i].em == 1) ++s.corrected;
    }
    f1_before += before[i].f1;
    f1_after += after[i].f1;
    rl_before += before[i].rouge_l;
    rl_after += after[i].rouge_l;
  }
  if (s.initially_failed > 0)
    s.repair_rate = static_cast<double>(s.corrected) / static_cast<double>(s.initially_failed);
  if (s.total > 0) {
    const double n = static_cast<double>(s.total);
    s.delta_em = 100.0 * static_cast<double>(s.corrected) / n;
    s.delta_f1 = 100.0 * (f1_after - f1_before) / n;
    s.delta_rouge_l = 100.0 * (rl_after - rl_before) / n;
  }
  return s;
}

}  // namespace drrag
