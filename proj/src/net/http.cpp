#include "cape/net/http.hpp"

#include <algorithm>
#include <mutex>
#include <thread>

#include "cape/error.hpp"
#include "httplib.h"

namespace cape::net {

namespace {

class HttplibTransport final : public HttpTransport {
 public:
  HttplibTransport(const std::string& base_url, std::string api_key,
                   std::chrono::seconds timeout)
      : api_key_(std::move(api_key)) {
    const auto scheme_end = base_url.find("://");
    const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    const auto path_start = base_url.find('/', host_start);
    origin_ = base_url.substr(0, path_start);
    if (path_start != std::string::npos) prefix_ = base_url.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    client_ = std::make_unique<httplib::Client>(origin_);
    if (!client_->is_valid()) throw ConfigError("unsupported endpoint URL: " + base_url);
    client_->set_connection_timeout(timeout);
    client_->set_read_timeout(timeout);
    client_->set_write_timeout(timeout);
  }

  HttpResponse post_json(const std::string& path, const std::string& body) override {
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    std::lock_guard lock(mutex_);  // one client, possibly shared by worker threads
    auto res = client_->Post(prefix_ + path, headers, body, "application/json");
    HttpResponse out;
    if (!res) {
      out.error = httplib::to_string(res.error());
      return out;
    }
    out.status = res->status;
    out.body = res->body;
    if (res->has_header("Retry-After")) {
      try {
        out.retry_after_seconds = std::stod(res->get_header_value("Retry-After"));
      } catch (const std::exception&) {
        // HTTP-date form is not supported; fall back to backoff.
      }
    }
    return out;
  }

 private:
  std::string api_key_;
  std::string origin_;
  std::string prefix_;
  std::unique_ptr<httplib::Client> client_;
  std::mutex mutex_;
};

bool retryable(const HttpResponse& r) {
  return r.status == 0 || r.status == 429 || r.status >= 500;
}

std::string describe(const HttpResponse& r) {
  if (r.status == 0) return "connection failed: " + r.error;
  std::string snippet = r.body.substr(0, 200);
  return "HTTP " + std::to_string(r.status) + (snippet.empty() ? "" : ": " + snippet);
}

}  // namespace

std::unique_ptr<HttpTransport> make_http_transport(const std::string& base_url,
                                                   const std::string& api_key,
                                                   std::chrono::seconds timeout) {
  return std::make_unique<HttplibTransport>(base_url, api_key, timeout);
}

PostResult post_with_retry(HttpTransport& transport, const std::string& path,
                           const std::string& body, const RetryPolicy& policy) {
  PostResult result;
  for (int attempt = 0;; ++attempt) {
    result.response = transport.post_json(path, body);
    result.attempts = attempt + 1;
    const auto& r = result.response;
    if (r.status >= 200 && r.status < 300) return result;
    if (!retryable(r) || attempt >= policy.max_retries) {
      throw TransportError(path + ": " + describe(r) + " after " +
                               std::to_string(result.attempts) + " attempt(s)",
                           result.attempts, r.status);
    }
    auto delay = policy.base_delay * (1 << attempt);
    if (r.status == 429 && r.retry_after_seconds) {
      delay = std::chrono::milliseconds(static_cast<long>(*r.retry_after_seconds * 1000.0));
    }
    delay = std::min(delay, policy.max_delay);
    if (policy.sleep) {
      policy.sleep(delay);
    } else {
      std::this_thread::sleep_for(delay);
    }
  }
}

}  // namespace cape::net
