#pragma once

#include <memory>
#include <string>

#include "cape/llm/completion.hpp"
#include "cape/net/http.hpp"

namespace cape::llm {

// POST {base}/completions. The model name is passed through untouched.
// Scoring uses echo mode: the prompt plus continuation is sent with
// max_tokens 0 and the continuation's tokens are located via text_offset.
class RemoteCompletionBackend final : public CompletionBackend {
 public:
  RemoteCompletionBackend(std::unique_ptr<net::HttpTransport> transport, std::string model,
                          net::RetryPolicy retry = {});

  // CAPE_LLM_URL and CAPE_API_KEY; throws ConfigError when the URL is unset.
  static std::unique_ptr<RemoteCompletionBackend> from_env(std::string model);

  // The JSON body sent for `request` (exposed for inspection).
  std::string request_body(const CompletionRequest& request) const;

 protected:
  std::vector<CompletionSample> do_complete(const CompletionRequest& request) override;
  double do_score(const std::string& prompt, const std::string& continuation) override;

 private:
  std::unique_ptr<net::HttpTransport> transport_;
  std::string model_;
  net::RetryPolicy retry_;
};

}  // namespace cape::llm
