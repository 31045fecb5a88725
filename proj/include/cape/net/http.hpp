#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <string>

namespace cape::net {

struct HttpResponse {
  int status = 0;  // 0: no response (connection failure)
  std::string body;
  std::optional<double> retry_after_seconds;
  std::string error;  // transport-level description when status == 0
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse post_json(const std::string& path, const std::string& body) = 0;
};

// cpp-httplib client. `base_url` is "scheme://host[:port][/prefix]"; request
// paths are appended to the prefix. A non-empty api_key is sent as a bearer token.
std::unique_ptr<HttpTransport> make_http_transport(const std::string& base_url,
                                                   const std::string& api_key,
                                                   std::chrono::seconds timeout = std::chrono::seconds(60));

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds base_delay{500};
  std::chrono::milliseconds max_delay{30000};
  // Replaceable for tests.
  std::function<void(std::chrono::milliseconds)> sleep;
};

struct PostResult {
  HttpResponse response;
  int attempts = 0;
};

// Retries connection failures, 429 and 5xx with exponential backoff
// (base_delay * 2^attempt), honoring Retry-After on 429. Other statuses fail
// immediately. Throws TransportError once the budget is spent.
PostResult post_with_retry(HttpTransport& transport, const std::string& path,
                           const std::string& body, const RetryPolicy& policy);

}  // namespace cape::net
