#include "cape/embed/embedding.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "cape/error.hpp"
#include "cape/kernels/dot.hpp"

namespace cape::embed {

namespace {

std::string_view trim(std::string_view s) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
  norm_ = std::sqrt(kernels::dot(values_, values_));
}

double cosine(const EmbeddingVector& u, const EmbeddingVector& v) {
  if (u.dimension() != v.dimension()) throw InputError("cosine: dimension mismatch");
  if (u.norm() == 0.0 || v.norm() == 0.0) throw InputError("cosine: zero-norm vector");
  const double c = kernels::dot(u.values(), v.values()) / (u.norm() * v.norm());
  return std::clamp(c, -1.0, 1.0);
}

std::vector<EmbeddingVector> EmbeddingProvider::embed_batch(std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed(t));
  return out;
}

TrigramEmbedder::TrigramEmbedder(std::size_t dimension) : dimension_(dimension) {
  if (dimension == 0) throw ConfigError("trigram embedder needs a positive dimension");
}

EmbeddingVector TrigramEmbedder::embed(std::string_view text) {
  const auto body = trim(text);
  if (body.empty()) throw InputError("cannot embed empty text");
  std::string padded = " ";
  for (char c : body) padded.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  padded.push_back(' ');

  std::vector<double> counts(dimension_, 0.0);
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
    counts[fnv1a(std::string_view(padded).substr(i, 3)) % dimension_] += 1.0;
  }
  const double n = std::sqrt(kernels::dot(counts, counts));
  for (auto& c : counts) c /= n;
  return EmbeddingVector(std::move(counts));
}

CachedProvider::CachedProvider(std::shared_ptr<EmbeddingProvider> inner)
    : inner_(std::move(inner)) {}

EmbeddingVector CachedProvider::embed(std::string_view text) {
  std::string key(text);
  {
    std::shared_lock lock(mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  EmbeddingVector v = inner_->embed(text);
  std::unique_lock lock(mutex_);
  return cache_.emplace(std::move(key), std::move(v)).first->second;
}

std::vector<EmbeddingVector> CachedProvider::embed_batch(std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out(texts.size());
  std::vector<std::string> missing;
  std::vector<std::size_t> slots;
  {
    std::shared_lock lock(mutex_);
    for (std::size_t i = 0; i < texts.size(); ++i) {
      if (auto it = cache_.find(texts[i]); it != cache_.end()) {
        out[i] = it->second;
      } else {
        missing.push_back(texts[i]);
        slots.push_back(i);
      }
    }
  }
  if (missing.empty()) return out;
  auto fresh = inner_->embed_batch(missing);
  std::unique_lock lock(mutex_);
  for (std::size_t j = 0; j < missing.size(); ++j) {
    out[slots[j]] = cache_.emplace(missing[j], std::move(fresh[j])).first->second;
  }
  return out;
}

std::size_t CachedProvider::size() const {
  std::shared_lock lock(mutex_);
  return cache_.size();
}

EmbeddingIndex::EmbeddingIndex(EmbeddingProvider& provider, std::vector<std::string> texts)
    : texts_(std::move(texts)) {
  auto vectors = provider.embed_batch(texts_);
  if (vectors.empty()) return;
  dim_ = vectors.front().dimension();
  rows_.reserve(dim_ * vectors.size());
  for (const auto& v : vectors) {
    if (v.dimension() != dim_) throw InputError("embedding dimension changed within a batch");
    if (v.norm() == 0.0) throw InputError("zero-norm embedding in index");
    rows_.insert(rows_.end(), v.values().begin(), v.values().end());
    norms_.push_back(v.norm());
  }
}

std::vector<double> EmbeddingIndex::similarities(const EmbeddingVector& query) const {
  std::vector<double> out(texts_.size());
  if (texts_.empty()) return out;
  if (query.dimension() != dim_) throw InputError("cosine: dimension mismatch");
  if (query.norm() == 0.0) throw InputError("cosine: zero-norm vector");
  kernels::dot_rows(query.values(), rows_, out);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::clamp(out[i] / (query.norm() * norms_[i]), -1.0, 1.0);
  }
  return out;
}

std::vector<Ranked> rank_scores(std::span<const std::string> candidates,
                                std::span<const double> similarities, std::size_t top_k) {
  if (candidates.empty()) throw InputError("rank_by_similarity: no candidates");
  if (top_k == 0) throw InputError("rank_by_similarity: top_k must be positive");
  std::vector<Ranked> all;
  all.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    all.push_back(Ranked{candidates[i], similarities[i], i});
  }
  auto before = [](const Ranked& a, const Ranked& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    if (a.candidate != b.candidate) return a.candidate < b.candidate;
    return a.index < b.index;
  };
  const std::size_t k = std::min(top_k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), before);
  all.resize(k);
  return all;
}

std::vector<Ranked> rank_by_similarity(EmbeddingProvider& provider, std::string_view query,
                                       std::span<const std::string> candidates,
                                       std::size_t top_k) {
  if (candidates.empty()) throw InputError("rank_by_similarity: no candidates");
  EmbeddingIndex index(provider, {candidates.begin(), candidates.end()});
  return rank_scores(candidates, index.similarities(provider.embed(query)), top_k);
}

}  // namespace cape::embed
