#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "drrag/backends.hpp"
#include "drrag/prompts.hpp"

namespace drrag {

// Binds a model endpoint to a prompt library for one diagnosis or repair
// episode, accumulating token usage across calls. Request fingerprints are
// "<role>:<scope>[:suffix]" with scope usually the trajectory id; scripted
// backends key their replies on them.
class PromptSession {
 public:
  PromptSession(ModelClient& model, const PromptLibrary& prompts, std::string scope,
                std::string model_name = "", std::uint64_t max_tokens = 1024)
      : model_(model), prompts_(prompts), scope_(std::move(scope)), model_name_(std::move(model_name)),
        max_tokens_(max_tokens) {}

  ModelReply ask(const std::string& role, const std::map<std::string, std::string>& vars,
                 const std::string& fingerprint_suffix = "") {
    ModelRequest req;
    req.model = model_name_;
    req.temperature = 0.0;
    req.max_tokens = max_tokens_;
    req.messages = {{"user", prompts_.render(role, vars)}};
    req.fingerprint = role + ":" + scope_ + fingerprint_suffix;
    ModelReply reply = model_.chat_complete(req);
    tokens_ += reply.usage.total();
    return reply;
  }

  std::uint64_t tokens() const { return tokens_; }
  const std::string& scope() const { return scope_; }
  const PromptLibrary& prompts() const { return prompts_; }
  ModelClient& model() const { return model_; }

 private:
  ModelClient& model_;
  const PromptLibrary& prompts_;
  std::string scope_;
  std::string model_name_;
  std::uint64_t max_tokens_;
  std::uint64_t tokens_ = 0;
};

}  // namespace drrag
