#pragma once

#include <cctype>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace drrag {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

enum class StepTag { Reason, Search, Answer };

struct StepLine {
  StepTag tag;
  std::string text;
};

// Lenient parse of REASON:/SEARCH:/ANSWER: lines. Leading list markers
// ("1.", "2)", "-", "*") are stripped; lines without a recognized tag are
// skipped and counted.
inline std::vector<StepLine> parse_step_lines(const std::string& text, std::size_t* skipped = nullptr) {
  std::vector<StepLine> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::string s = trim(line);
    if (s.empty()) continue;
    std::size_t i = 0;
    while (i < s.size() && (std::isdigit(static_cast<unsigned char>(s[i])) || s[i] == '.' || s[i] == ')' ||
                            s[i] == '-' || s[i] == '*' || s[i] == ' '))
      ++i;
    s = s.substr(i);
    auto has_tag = [&](const char* tag) {
      const std::size_t n = std::string(tag).size();
      if (s.size() < n + 1) return false;
      for (std::size_t j = 0; j < n; ++j)
        if (std::toupper(static_cast<unsigned char>(s[j])) != tag[j]) return false;
      return s[n] == ':';
    };
    if (has_tag("REASON")) out.push_back({StepTag::Reason, trim(s.substr(7))});
    else if (has_tag("SEARCH")) out.push_back({StepTag::Search, trim(s.substr(7))});
    else if (has_tag("ANSWER")) out.push_back({StepTag::Answer, trim(s.substr(7))});
    else if (skipped) ++*skipped;
  }
  return out;
}

// Extracts the first TAG[payload] occurrence, e.g. SEARCH[query].
inline std::optional<std::string> extract_bracket_tag(const std::string& text, const std::string& tag,
                                                      std::size_t* pos_out = nullptr) {
  const std::string open = tag + "[";
  const std::size_t pos = text.find(open);
  if (pos == std::string::npos) return std::nullopt;
  const std::size_t close = text.find(']', pos + open.size());
  if (close == std::string::npos) return std::nullopt;
  if (pos_out) *pos_out = pos;
  return text.substr(pos + open.size(), close - pos - open.size());
}

}  // namespace drrag
