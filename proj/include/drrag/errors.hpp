#pragma once

#include <stdexcept>
#include <string>

namespace drrag {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input: bad JSON, schema violations, unparseable model output.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(what) {}
};

// A constructed value violates a type invariant (e.g. terminal mismatch).
class InvariantError : public Error {
 public:
  explicit InvariantError(const std::string& what) : Error(what) {}
};

// Index out of the documented bounds.
class RangeError : public Error {
 public:
  explicit RangeError(const std::string& what) : Error(what) {}
};

// A remote model or retriever call failed (HTTP error, timeout, refusal).
class BackendError : public Error {
 public:
  explicit BackendError(const std::string& what) : Error(what) {}
};

// Scripted backend had no entry for a request fingerprint. Always a test bug.
class ScriptMissError : public Error {
 public:
  explicit ScriptMissError(const std::string& what) : Error(what) {}
};

// Bad run configuration (unknown key, inconsistent values, missing path).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

}  // namespace drrag
