#include "cape/llm/scripted.hpp"

#include <fstream>
#include <sstream>

#include "cape/error.hpp"
#include "json_access.hpp"

namespace cape::llm {

using detail::as;
using detail::child;
using nlohmann::json;

namespace {

std::string_view tail(std::string_view prompt) {
  return prompt.size() > kTailChars ? prompt.substr(prompt.size() - kTailChars) : prompt;
}

PromptMatcher matcher_from_json(const json& doc, const std::string& path) {
  PromptMatcher m;
  if (auto it = doc.find("contains"); it != doc.end()) {
    if (it->is_string()) {
      m.contains.push_back(it->get<std::string>());
    } else if (it->is_array()) {
      for (std::size_t i = 0; i < it->size(); ++i) {
        m.contains.push_back(as<std::string>((*it)[i], child(child(path, "contains"), i)));
      }
    } else {
      throw ParseError(child(path, "contains"), "expected a string or an array of strings");
    }
  }
  if (auto it = doc.find("ends_with"); it != doc.end()) {
    m.ends_with = as<std::string>(*it, child(path, "ends_with"));
  }
  if (auto it = doc.find("regex"); it != doc.end()) {
    m.pattern = as<std::string>(*it, child(path, "regex"));
    try {
      std::regex check(*m.pattern);
    } catch (const std::regex_error& e) {
      throw ParseError(child(path, "regex"), std::string("invalid regex: ") + e.what());
    }
  }
  const auto scope = detail::get_or<std::string>(doc, "scope", path, "tail");
  if (scope != "tail" && scope != "prompt") {
    throw ParseError(child(path, "scope"), "expected 'tail' or 'prompt'");
  }
  m.whole_prompt = scope == "prompt";
  return m;
}

CompletionSample sample_from_json(const json& doc, const std::string& path) {
  if (doc.is_string()) {
    auto text = doc.get<std::string>();
    auto lp = synthetic_logprobs(text);
    return CompletionSample::make(std::move(text), std::move(lp));
  }
  auto text = detail::get<std::string>(doc, "text", path);
  std::vector<double> lp;
  if (auto it = doc.find("logprobs"); it != doc.end()) {
    if (!it->is_array()) throw ParseError(child(path, "logprobs"), "expected an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const double v = as<double>((*it)[i], child(child(path, "logprobs"), i));
      if (v > 0.0) throw ParseError(child(child(path, "logprobs"), i), "log-probability above 0");
      lp.push_back(v);
    }
  } else {
    lp = synthetic_logprobs(text);
  }
  return CompletionSample::make(std::move(text), std::move(lp));
}

}  // namespace

bool PromptMatcher::matches(std::string_view prompt) const {
  const std::string_view view = whole_prompt ? prompt : tail(prompt);
  for (const auto& c : contains) {
    if (view.find(c) == std::string_view::npos) return false;
  }
  if (ends_with) {
    if (view.size() < ends_with->size() ||
        view.substr(view.size() - ends_with->size()) != *ends_with) {
      return false;
    }
  }
  if (pattern) {
    const std::regex re(*pattern);
    if (!std::regex_search(view.begin(), view.end(), re)) return false;
  }
  return true;
}

std::vector<double> synthetic_logprobs(std::string_view text) {
  std::vector<double> out;
  std::istringstream in{std::string(text)};
  std::string word;
  while (in >> word) out.push_back(-0.1);
  return out;
}

ScriptedBackend::ScriptedBackend(std::vector<ScriptRule> rules, std::vector<ScoreEntry> scores,
                                 std::optional<double> score_floor)
    : rules_(std::move(rules)), scores_(std::move(scores)), floor_(score_floor) {
  for (const auto& r : rules_) {
    if (r.responses.empty()) throw ConfigError("scripted rule without responses");
  }
  if (floor_ && *floor_ > 0.0) throw ConfigError("score floor must be <= 0");
  for (const auto& s : scores_) {
    if (s.score > 0.0) throw ConfigError("scripted score above 0 for '" + s.continuation + "'");
  }
}

ScriptedBackend ScriptedBackend::from_json(const json& doc) {
  std::vector<ScriptRule> rules;
  const json& rs = detail::require_array(doc, "rules", "");
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const std::string p = child("/rules", i);
    ScriptRule rule;
    rule.when = matcher_from_json(rs[i], p);
    const json& responses = detail::require_array(rs[i], "responses", p);
    if (responses.empty()) throw ParseError(child(p, "responses"), "at least one response");
    for (std::size_t j = 0; j < responses.size(); ++j) {
      rule.responses.push_back(sample_from_json(responses[j], child(child(p, "responses"), j)));
    }
    rules.push_back(std::move(rule));
  }

  std::vector<ScoreEntry> scores;
  std::optional<double> floor;
  if (auto it = doc.find("scores"); it != doc.end()) {
    if (auto f = it->find("floor"); f != it->end()) floor = as<double>(*f, "/scores/floor");
    if (auto es = it->find("entries"); es != it->end()) {
      for (std::size_t i = 0; i < es->size(); ++i) {
        const std::string p = child("/scores/entries", i);
        const json& e = (*es)[i];
        ScoreEntry entry;
        entry.continuation = detail::get<std::string>(e, "continuation", p);
        entry.score = detail::get<double>(e, "score", p);
        if (e.contains("contains") || e.contains("ends_with") || e.contains("regex")) {
          entry.when = matcher_from_json(e, p);
        }
        scores.push_back(std::move(entry));
      }
    }
  }
  try {
    return ScriptedBackend(std::move(rules), std::move(scores), floor);
  } catch (const ConfigError& e) {
    throw ParseError("/scores", e.what());
  }
}

ScriptedBackend ScriptedBackend::load_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open script file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return from_json(detail::parse_document(ss.str(), path.string()));
  } catch (const ParseError& e) {
    throw ParseError(e.path(), path.string() + ": " + e.what());
  }
}

std::vector<CompletionRequest> ScriptedBackend::call_log() const {
  std::lock_guard lock(log_mutex_);
  return log_;
}

std::vector<CompletionSample> ScriptedBackend::do_complete(const CompletionRequest& request) {
  {
    std::lock_guard lock(log_mutex_);
    log_.push_back(request);
  }
  for (const auto& rule : rules_) {
    if (!rule.when.matches(request.prompt)) continue;
    std::vector<CompletionSample> out;
    out.reserve(static_cast<std::size_t>(request.n_samples));
    for (int i = 0; i < request.n_samples; ++i) {
      out.push_back(rule.responses[static_cast<std::size_t>(i) % rule.responses.size()]);
    }
    return out;
  }
  std::string_view end = tail(request.prompt);
  if (end.size() > 120) end = end.substr(end.size() - 120);
  throw UnmatchedPromptError("no scripted rule matches prompt ending: ..." + std::string(end));
}

double ScriptedBackend::do_score(const std::string& prompt, const std::string& raw) {
  // Callers usually prepend a separating space; table keys are bare step text.
  const auto first = raw.find_first_not_of(" \t\n");
  const auto last = raw.find_last_not_of(" \t\n");
  const std::string continuation =
      first == std::string::npos ? std::string() : raw.substr(first, last - first + 1);
  for (const auto& e : scores_) {
    if (e.continuation != continuation) continue;
    if (e.when && !e.when->matches(prompt)) continue;
    return e.score;
  }
  if (floor_) return *floor_;
  if (scores_.empty()) throw CapabilityError("scripted backend has no score table");
  throw UnmatchedPromptError("no score configured for '" + continuation + "' and no floor set");
}

}  // namespace cape::llm
