#pragma once

#include <cstddef>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cape::embed {

class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<double> values);

  const std::vector<double>& values() const noexcept { return values_; }
  std::size_t dimension() const noexcept { return values_.size(); }
  double norm() const noexcept { return norm_; }

 private:
  std::vector<double> values_;
  double norm_ = 0.0;
};

// u.v / (|u||v|), clamped to [-1, 1]. Throws InputError on a dimension
// mismatch or a zero-norm operand.
double cosine(const EmbeddingVector& u, const EmbeddingVector& v);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string name() const = 0;
  // 0 when not known until the first response (remote providers).
  virtual std::size_t dimension() const = 0;
  // Throws InputError for text that is empty after trimming.
  virtual EmbeddingVector embed(std::string_view text) = 0;
  virtual std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts);
};

// Character-trigram hashing embedder. Text is trimmed, lowercased and padded
// with one space on each side; every trigram is FNV-1a hashed into one of
// `dimension` buckets and the count vector is L2-normalized.
class TrigramEmbedder final : public EmbeddingProvider {
 public:
  explicit TrigramEmbedder(std::size_t dimension = 256);
  std::string name() const override { return "trigram"; }
  std::size_t dimension() const override { return dimension_; }
  EmbeddingVector embed(std::string_view text) override;

 private:
  std::size_t dimension_;
};

// Memoizes another provider. Safe for concurrent use.
class CachedProvider final : public EmbeddingProvider {
 public:
  explicit CachedProvider(std::shared_ptr<EmbeddingProvider> inner);
  std::string name() const override { return inner_->name(); }
  std::size_t dimension() const override { return inner_->dimension(); }
  EmbeddingVector embed(std::string_view text) override;
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override;

  std::size_t size() const;

 private:
  std::shared_ptr<EmbeddingProvider> inner_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, EmbeddingVector> cache_;
};

// A fixed set of embedded strings laid out row-major for bulk similarity.
class EmbeddingIndex {
 public:
  EmbeddingIndex() = default;
  EmbeddingIndex(EmbeddingProvider& provider, std::vector<std::string> texts);

  std::size_t size() const noexcept { return texts_.size(); }
  const std::vector<std::string>& texts() const noexcept { return texts_; }

  // Cosine similarity of `query` against every row, in row order.
  std::vector<double> similarities(const EmbeddingVector& query) const;

 private:
  std::vector<std::string> texts_;
  std::size_t dim_ = 0;
  std::vector<double> rows_;
  std::vector<double> norms_;
};

struct Ranked {
  std::string candidate;
  double similarity = 0.0;
  std::size_t index = 0;  // position in the candidate list
};

// Descending similarity, ties by candidate string; at most top_k entries.
// Throws InputError for an empty candidate list or top_k == 0.
std::vector<Ranked> rank_by_similarity(EmbeddingProvider& provider, std::string_view query,
                                       std::span<const std::string> candidates,
                                       std::size_t top_k);

// Same ordering over precomputed similarities.
std::vector<Ranked> rank_scores(std::span<const std::string> candidates,
                                std::span<const double> similarities, std::size_t top_k);

}  // namespace cape::embed
