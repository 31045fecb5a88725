#include "cape/llm/remote.hpp"

#include <algorithm>
#include <cstdlib>

#include "cape/error.hpp"
#include "json.hpp"

namespace cape::llm {

using nlohmann::json;
using nlohmann::ordered_json;

RemoteCompletionBackend::RemoteCompletionBackend(std::unique_ptr<net::HttpTransport> transport,
                                                 std::string model, net::RetryPolicy retry)
    : transport_(std::move(transport)), model_(std::move(model)), retry_(std::move(retry)) {}

std::unique_ptr<RemoteCompletionBackend> RemoteCompletionBackend::from_env(std::string model) {
  const char* url = std::getenv("CAPE_LLM_URL");
  if (url == nullptr || *url == '\0') throw ConfigError("CAPE_LLM_URL is not set");
  const char* key = std::getenv("CAPE_API_KEY");
  return std::make_unique<RemoteCompletionBackend>(net::make_http_transport(url, key ? key : ""),
                                                   std::move(model));
}

std::string RemoteCompletionBackend::request_body(const CompletionRequest& r) const {
  ordered_json body;
  if (!model_.empty()) body["model"] = model_;
  body["prompt"] = r.prompt;
  body["max_tokens"] = r.max_tokens;
  body["temperature"] = r.temperature;
  body["presence_penalty"] = r.presence_penalty;
  body["n"] = r.n_samples;
  body["stop"] = r.stop;
  if (r.want_logprobs) body["logprobs"] = 1;
  return body.dump();
}

std::vector<CompletionSample> RemoteCompletionBackend::do_complete(const CompletionRequest& r) {
  auto result = net::post_with_retry(*transport_, "/completions", request_body(r), retry_);
  auto malformed = [&](const std::string& what) {
    return TransportError("malformed completion response: " + what, result.attempts,
                          result.response.status);
  };
  std::vector<CompletionSample> out;
  try {
    const auto doc = json::parse(result.response.body);
    std::vector<std::pair<long, CompletionSample>> indexed;
    const auto& choices = doc.at("choices");
    for (std::size_t i = 0; i < choices.size(); ++i) {
      const auto& c = choices[i];
      std::vector<double> lp;
      if (r.want_logprobs) {
        const auto& logprobs = c.at("logprobs");
        if (logprobs.is_null()) throw malformed("logprobs missing");
        for (const auto& v : logprobs.at("token_logprobs")) {
          if (!v.is_null()) lp.push_back(std::min(0.0, v.get<double>()));
        }
      }
      const long index = c.contains("index") ? c["index"].get<long>() : static_cast<long>(i);
      indexed.emplace_back(index, CompletionSample::make(c.at("text").get<std::string>(), lp));
    }
    std::stable_sort(indexed.begin(), indexed.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [_, s] : indexed) out.push_back(std::move(s));
  } catch (const json::exception& e) {
    throw malformed(e.what());
  }
  if (out.empty()) throw malformed("no choices");
  return out;
}

double RemoteCompletionBackend::do_score(const std::string& prompt,
                                         const std::string& continuation) {
  ordered_json body;
  if (!model_.empty()) body["model"] = model_;
  body["prompt"] = prompt + continuation;
  body["max_tokens"] = 0;
  body["echo"] = true;
  body["logprobs"] = 0;
  auto result = net::post_with_retry(*transport_, "/completions", body.dump(), retry_);
  try {
    const auto doc = json::parse(result.response.body);
    const auto& logprobs = doc.at("choices").at(0).at("logprobs");
    const auto& tokens = logprobs.at("token_logprobs");
    const auto& offsets = logprobs.at("text_offset");
    if (tokens.size() != offsets.size()) {
      throw TransportError("token_logprobs and text_offset differ in length", result.attempts,
                           result.response.status);
    }
    std::vector<double> lp;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (offsets[i].get<std::size_t>() >= prompt.size() && !tokens[i].is_null()) {
        lp.push_back(std::min(0.0, tokens[i].get<double>()));
      }
    }
    if (lp.empty()) {
      throw TransportError("echo response contains no continuation tokens", result.attempts,
                           result.response.status);
    }
    return mean_logprob(lp);
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed scoring response: ") + e.what(), result.attempts,
                         result.response.status);
  }
}

}  // namespace cape::llm
