#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "cape/llm/completion.hpp"
#include "json.hpp"

namespace cape::llm {

// Prompt condition. By default only the last kTailChars characters of the
// prompt are inspected; `whole_prompt` widens that to the full text.
struct PromptMatcher {
  std::vector<std::string> contains;  // all must occur
  std::optional<std::string> ends_with;
  std::optional<std::string> pattern;  // ECMAScript regex, searched
  bool whole_prompt = false;

  bool matches(std::string_view prompt) const;
};

inline constexpr std::size_t kTailChars = 400;

struct ScriptRule {
  PromptMatcher when;
  // Cycled to fill n_samples.
  std::vector<CompletionSample> responses;
};

struct ScoreEntry {
  std::string continuation;
  double score = 0.0;
  std::optional<PromptMatcher> when;
};

// Deterministic test double. The first matching rule wins; a prompt no rule
// matches raises UnmatchedPromptError.
class ScriptedBackend final : public CompletionBackend {
 public:
  ScriptedBackend(std::vector<ScriptRule> rules, std::vector<ScoreEntry> scores = {},
                  std::optional<double> score_floor = std::nullopt);

  // {"rules": [{"contains": [...], "ends_with": "...", "regex": "...",
  //             "scope": "tail"|"prompt", "responses": ["text" | {"text", "logprobs"}]}],
  //  "scores": {"floor": -5.0, "entries": [{"continuation", "score", "contains"...}]}}
  // Responses given as bare strings get a synthetic -0.1 per whitespace token.
  static ScriptedBackend from_json(const nlohmann::json& doc);
  static ScriptedBackend load_file(const std::filesystem::path& path);

  std::vector<CompletionRequest> call_log() const;

 protected:
  std::vector<CompletionSample> do_complete(const CompletionRequest& request) override;
  double do_score(const std::string& prompt, const std::string& continuation) override;

 private:
  std::vector<ScriptRule> rules_;
  std::vector<ScoreEntry> scores_;
  std::optional<double> floor_;
  mutable std::mutex log_mutex_;
  std::vector<CompletionRequest> log_;
};

// -0.1 per whitespace-separated token.
std::vector<double> synthetic_logprobs(std::string_view text);

}  // namespace cape::llm
