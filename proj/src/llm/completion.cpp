#include "cape/llm/completion.hpp"

#include <cctype>
#include <numeric>
#include <regex>

#include "cape/error.hpp"

namespace cape::llm {

double mean_logprob(std::span<const double> token_logprobs) {
  if (token_logprobs.empty()) return 0.0;
  return std::accumulate(token_logprobs.begin(), token_logprobs.end(), 0.0) /
         static_cast<double>(token_logprobs.size());
}

CompletionSample CompletionSample::make(std::string text, std::vector<double> token_logprobs) {
  CompletionSample s;
  s.text = std::move(text);
  s.mean_logprob = llm::mean_logprob(token_logprobs);
  s.empty_logprobs = token_logprobs.empty();
  s.token_logprobs = std::move(token_logprobs);
  return s;
}

std::string clean_step_text(std::string_view raw) {
  std::string_view s = raw;
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && is_space(s.front()) && s.front() != '\n') s.remove_prefix(1);
  if (auto nl = s.find('\n'); nl != std::string_view::npos) s = s.substr(0, nl);
  static const std::regex label(R"(^\s*Step\s*\d+\s*:)", std::regex::icase);
  std::string line(s);
  std::smatch m;
  if (std::regex_search(line, m, label)) line = m.suffix().str();
  std::string_view v = line;
  while (!v.empty() && is_space(v.front())) v.remove_prefix(1);
  while (!v.empty() && is_space(v.back())) v.remove_suffix(1);
  if (!v.empty() && v.back() == '.') v.remove_suffix(1);
  return std::string(v);
}

std::vector<CompletionSample> CompletionBackend::complete(const CompletionRequest& request) {
  ++completion_calls_;
  if (request.prompt.empty()) throw InputError("completion prompt is empty");
  if (request.n_samples < 1) throw InputError("n_samples must be at least 1");
  return do_complete(request);
}

double CompletionBackend::score_continuation(const std::string& prompt,
                                             const std::string& continuation) {
  ++scoring_calls_;
  if (continuation.empty()) throw InputError("continuation is empty");
  const double v = do_score(prompt, continuation);
  if (v > 0.0) throw ContractViolation("backend returned a positive log-probability");
  return v;
}

}  // namespace cape::llm
