#pragma once

#include <atomic>
#include <memory>

#include "cape/embed/embedding.hpp"
#include "cape/net/http.hpp"

namespace cape::embed {

// POST {base}/embeddings with {"input": [...]} and reads data[i].embedding.
class RemoteEmbeddingProvider final : public EmbeddingProvider {
 public:
  RemoteEmbeddingProvider(std::unique_ptr<net::HttpTransport> transport, std::string model,
                          net::RetryPolicy retry = {});

  // Uses CAPE_EMBED_URL and CAPE_API_KEY; throws ConfigError when the URL is unset.
  static std::unique_ptr<RemoteEmbeddingProvider> from_env(std::string model);

  std::string name() const override { return "remote"; }
  std::size_t dimension() const override { return dimension_.load(); }
  EmbeddingVector embed(std::string_view text) override;
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override;

 private:
  std::unique_ptr<net::HttpTransport> transport_;
  std::string model_;
  net::RetryPolicy retry_;
  std::atomic<std::size_t> dimension_{0};
};

}  // namespace cape::embed
