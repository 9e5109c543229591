#pragma once

#include <string>
#include <vector>

#include "drrag/errors.hpp"

namespace drrag {

enum class CoverageValue { Full, Partial };
enum class CoverageSource { OracleEvidence, JudgeModel };

struct Coverage {
  CoverageValue value = CoverageValue::Partial;
  CoverageSource source = CoverageSource::JudgeModel;
  bool fallback = false;  // set when an unparseable judge verdict forced the conservative default

  friend bool operator==(const Coverage&, const Coverage&) = default;
};

// The four actionable failure classes. Dataset noise is deliberately not a
// member: non-actionable instances are skipped before diagnosis.
enum class ErrorType { FormatError, ReasoningError, RetrieverError, SearchError };

inline const char* to_string(ErrorType e) {
  switch (e) {
    case ErrorType::FormatError: return "format";
    case ErrorType::ReasoningError: return "reasoning";
    case ErrorType::RetrieverError: return "retriever";
    case ErrorType::SearchError: return "search";
  }
  return "unknown";
}

inline ErrorType error_type_from_string(const std::string& s) {
  if (s == "format") return ErrorType::FormatError;
  if (s == "reasoning") return ErrorType::ReasoningError;
  if (s == "retriever") return ErrorType::RetrieverError;
  if (s == "search") return ErrorType::SearchError;
  throw ParseError("unknown error type: \"" + s + "\"");
}

inline const char* coverage_name(CoverageValue v) {
  return v == CoverageValue::Full ? "full" : "partial";
}

// The coverage gate: which error labels a diagnosis may emit.
inline std::vector<ErrorType> admissible_labels(const Coverage& coverage) {
  if (coverage.value == CoverageValue::Full)
    return {ErrorType::FormatError, ErrorType::ReasoningError};
  return {ErrorType::FormatError, ErrorType::RetrieverError, ErrorType::SearchError};
}

inline bool is_admissible(ErrorType e, const Coverage& coverage) {
  for (ErrorType a : admissible_labels(coverage))
    if (a == e) return true;
  return false;
}

struct Diagnosis {
  ErrorType error_type = ErrorType::ReasoningError;
  std::size_t k_dagger = 1;  // 1-based; K+1 denotes the terminal answer action
  Coverage coverage;
  std::string rationale;  // raw judge wording, audit only
  std::uint64_t diagnosis_tokens = 0;
  bool fallback_label = false;         // judge reply unparseable, gate default applied
  bool fallback_localization = false;  // no step marked erroneous, latest candidate used
};

inline void validate_diagnosis(const Diagnosis& d, std::size_t K) {
  if (d.k_dagger < 1 || d.k_dagger > K + 1)
    throw InvariantError("diagnosis: k_dagger " + std::to_string(d.k_dagger) + " out of [1, " +
                         std::to_string(K + 1) + "]");
  if (d.error_type == ErrorType::FormatError && d.k_dagger != K + 1)
    throw InvariantError("diagnosis: format errors localize to the terminal answer step");
  if (!is_admissible(d.error_type, d.coverage))
    throw InvariantError(std::string("diagnosis: label \"") + to_string(d.error_type) +
                         "\" not admissible under " + coverage_name(d.coverage.value) + " coverage");
}

}  // namespace drrag
