#include "cape/embed/remote.hpp"

#include <cctype>
#include <cstdlib>

#include "cape/error.hpp"
#include "json.hpp"

namespace cape::embed {

namespace {

bool blank(std::string_view s) {
  for (char c : s) {
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

}  // namespace

RemoteEmbeddingProvider::RemoteEmbeddingProvider(std::unique_ptr<net::HttpTransport> transport,
                                                 std::string model, net::RetryPolicy retry)
    : transport_(std::move(transport)), model_(std::move(model)), retry_(std::move(retry)) {}

std::unique_ptr<RemoteEmbeddingProvider> RemoteEmbeddingProvider::from_env(std::string model) {
  const char* url = std::getenv("CAPE_EMBED_URL");
  if (url == nullptr || *url == '\0') throw ConfigError("CAPE_EMBED_URL is not set");
  const char* key = std::getenv("CAPE_API_KEY");
  return std::make_unique<RemoteEmbeddingProvider>(
      net::make_http_transport(url, key ? key : ""), std::move(model));
}

EmbeddingVector RemoteEmbeddingProvider::embed(std::string_view text) {
  std::vector<std::string> one{std::string(text)};
  return std::move(embed_batch(one).front());
}

std::vector<EmbeddingVector> RemoteEmbeddingProvider::embed_batch(
    std::span<const std::string> texts) {
  if (texts.empty()) return {};
  for (const auto& t : texts) {
    if (blank(t)) throw InputError("cannot embed empty text");
  }
  nlohmann::json req;
  req["input"] = std::vector<std::string>(texts.begin(), texts.end());
  if (!model_.empty()) req["model"] = model_;
  auto result = net::post_with_retry(*transport_, "/embeddings", req.dump(), retry_);

  std::vector<EmbeddingVector> out(texts.size());
  try {
    const auto doc = nlohmann::json::parse(result.response.body);
    const auto& data = doc.at("data");
    if (data.size() != texts.size()) {
      throw TransportError("embedding response has " + std::to_string(data.size()) +
                               " entries for " + std::to_string(texts.size()) + " inputs",
                           result.attempts, result.response.status);
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      const std::size_t slot = data[i].contains("index") ? data[i]["index"].get<std::size_t>() : i;
      if (slot >= out.size()) throw TransportError("embedding index out of range", result.attempts,
                                                   result.response.status);
      out[slot] = EmbeddingVector(data[i].at("embedding").get<std::vector<double>>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("malformed embedding response: ") + e.what(),
                         result.attempts, result.response.status);
  }
  std::size_t expected = dimension_.load();
  for (const auto& v : out) {
    if (expected == 0) {
      dimension_.compare_exchange_strong(expected, v.dimension());
      expected = dimension_.load();
    }
    if (v.dimension() != expected) {
      throw TransportError("embedding dimension changed between responses", result.attempts,
                           result.response.status);
    }
  }
  return out;
}

}  // namespace cape::embed
