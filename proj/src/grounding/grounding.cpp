#include "cape/grounding/grounding.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "cape/error.hpp"
#include "cape/world/serialize.hpp"
#include "json_access.hpp"

namespace cape::grounding {

namespace {

void check_similarity(double c) {
  if (!(c >= -1.0 && c <= 1.0)) throw ContractViolation("similarity outside [-1, 1]");
}

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; });
}

std::string normalize_name(std::string_view s) {
  std::string out;
  for (char c : s) {
    out.push_back(c == '_' ? ' ' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

// Best-first order over repertoire indices by similarity.
std::vector<std::size_t> by_similarity(std::span<const world::GroundedAction> repertoire,
                                       std::span<const double> sims,
                                       std::vector<std::size_t> indices) {
  std::sort(indices.begin(), indices.end(), [&](std::size_t a, std::size_t b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    if (repertoire[a].rendered != repertoire[b].rendered) {
      return repertoire[a].rendered < repertoire[b].rendered;
    }
    return a < b;
  });
  return indices;
}

}  // namespace

std::string_view scorer_name(Scorer s) {
  switch (s) {
    case Scorer::weighted: return "weighted";
    case Scorer::geometric: return "geometric";
    case Scorer::affordance: return "affordance";
  }
  return "geometric";
}

std::optional<Scorer> parse_scorer(std::string_view s) {
  if (s == "weighted") return Scorer::weighted;
  if (s == "geometric") return Scorer::geometric;
  if (s == "affordance") return Scorer::affordance;
  return std::nullopt;
}

double score_weighted(double similarity, double mean_logprob, double beta) {
  check_similarity(similarity);
  return similarity + beta * mean_logprob;
}

double score_geometric(double similarity, double mean_logprob) {
  check_similarity(similarity);
  if (mean_logprob > 0.0) throw ContractViolation("mean log-probability above 0");
  return ((similarity + 1.0) / 2.0) * std::exp(mean_logprob);
}

double GroundingConfig::effective_threshold() const {
  if (threshold) return *threshold;
  return scorer == Scorer::geometric ? 0.4 : 0.0;
}

double GroundingConfig::score(double similarity, double mean_logprob) const {
  if (scorer == Scorer::affordance) throw ConfigError("the affordance scorer cannot ground text");
  return scorer == Scorer::geometric ? score_geometric(similarity, mean_logprob)
                                     : score_weighted(similarity, mean_logprob, beta);
}

bool ranks_before(const ScoredCandidate& a, const ScoredCandidate& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.admissible.rendered != b.admissible.rendered) {
    return a.admissible.rendered < b.admissible.rendered;
  }
  return a.admissible.object_id.value_or(world::EntityId{0}) <
         b.admissible.object_id.value_or(world::EntityId{0});
}

nlohmann::ordered_json to_json(const ScoredCandidate& c) {
  nlohmann::ordered_json out;
  out["free_text"] = c.free_text;
  out["admissible"] = world::to_json(c.admissible);
  out["similarity"] = c.similarity;
  out["mean_logprob"] = c.mean_logprob;
  out["score"] = c.score;
  out["scorer"] = std::string(scorer_name(c.scorer));
  return out;
}

ScoredCandidate candidate_from_json(const nlohmann::json& doc, const std::string& path) {
  ScoredCandidate c;
  c.free_text = detail::get<std::string>(doc, "free_text", path);
  c.admissible = world::action_from_json(detail::require(doc, "admissible", path),
                                         detail::child(path, "admissible"));
  c.similarity = detail::get<double>(doc, "similarity", path);
  c.mean_logprob = detail::get<double>(doc, "mean_logprob", path);
  c.score = detail::get<double>(doc, "score", path);
  const auto name = detail::get<std::string>(doc, "scorer", path);
  const auto scorer = parse_scorer(name);
  if (!scorer) throw ParseError(detail::child(path, "scorer"), "unknown scorer '" + name + "'");
  c.scorer = *scorer;
  return c;
}

Grounder::Grounder(std::vector<world::GroundedAction> repertoire,
                   embed::EmbeddingProvider& provider)
    : repertoire_(std::move(repertoire)), provider_(&provider) {
  if (repertoire_.empty()) throw ConfigError("grounding needs a non-empty repertoire");
  std::vector<std::string> texts;
  texts.reserve(repertoire_.size());
  for (const auto& a : repertoire_) texts.push_back(a.rendered);
  index_ = embed::EmbeddingIndex(provider, std::move(texts));
}

std::vector<double> Grounder::similarities(std::string_view text) const {
  return index_.similarities(provider_->embed(text));
}

std::vector<ScoredCandidate> Grounder::rank(std::span<const llm::CompletionSample> samples,
                                            const GroundingConfig& config) const {
  std::vector<ScoredCandidate> best(repertoire_.size());
  std::vector<bool> filled(repertoire_.size(), false);
  bool any = false;
  for (const auto& sample : samples) {
    if (blank(sample.text)) continue;
    any = true;
    const auto sims = similarities(sample.text);
    for (std::size_t i = 0; i < repertoire_.size(); ++i) {
      const double s = config.score(sims[i], sample.mean_logprob);
      if (filled[i] && s <= best[i].score) continue;
      best[i] = ScoredCandidate{sample.text, repertoire_[i], sims[i], sample.mean_logprob, s,
                                config.scorer};
      filled[i] = true;
    }
  }
  if (!any) throw InputError("grounding needs at least one non-blank sample");
  std::sort(best.begin(), best.end(), ranks_before);
  return best;
}

GroundingOutcome Grounder::ground(std::span<const llm::CompletionSample> samples,
                                  const GroundingConfig& config) const {
  auto ranked = rank(samples, config);
  GroundingOutcome out{std::move(ranked.front()), false};
  out.below_threshold = out.best.score < config.effective_threshold();
  return out;
}

GroundingOutcome ground_step(std::span<const llm::CompletionSample> samples,
                             std::span<const world::GroundedAction> repertoire,
                             embed::EmbeddingProvider& provider, const GroundingConfig& config) {
  Grounder g({repertoire.begin(), repertoire.end()}, provider);
  return g.ground(samples, config);
}

std::vector<world::GroundedAction> subsample_repertoire(
    std::string_view target_object, std::span<const world::GroundedAction> repertoire,
    std::span<const double> similarities, const SubsampleLimits& limits) {
  if (repertoire.empty()) throw InputError("subsample_repertoire: empty repertoire");
  if (similarities.size() != repertoire.size()) {
    throw InputError("subsample_repertoire: similarity count does not match repertoire");
  }
  if (repertoire.size() <= limits.passthrough) return {repertoire.begin(), repertoire.end()};

  std::vector<std::size_t> all(repertoire.size());
  std::iota(all.begin(), all.end(), 0);
  std::vector<bool> keep(repertoire.size(), false);

  const auto ranked = by_similarity(repertoire, similarities, all);
  for (std::size_t i = 0; i < std::min(limits.most_similar, ranked.size()); ++i) {
    keep[ranked[i]] = true;
  }

  const std::string target = normalize_name(target_object);
  if (!target.empty()) {
    std::vector<std::size_t> matching;
    for (std::size_t i = 0; i < repertoire.size(); ++i) {
      if (normalize_name(repertoire[i].object_name) == target) matching.push_back(i);
    }
    const auto ranked_targets = by_similarity(repertoire, similarities, std::move(matching));
    for (std::size_t i = 0; i < std::min(limits.target_object, ranked_targets.size()); ++i) {
      keep[ranked_targets[i]] = true;
    }
  }

  std::vector<world::GroundedAction> out;
  for (std::size_t i = 0; i < repertoire.size(); ++i) {
    if (keep[i]) out.push_back(repertoire[i]);
  }
  return out;
}

std::vector<world::GroundedAction> subsample_repertoire(
    std::string_view prototype, std::string_view target_object,
    std::span<const world::GroundedAction> repertoire, embed::EmbeddingProvider& provider,
    const SubsampleLimits& limits) {
  if (repertoire.empty()) throw InputError("subsample_repertoire: empty repertoire");
  if (repertoire.size() <= limits.passthrough) return {repertoire.begin(), repertoire.end()};
  Grounder g({repertoire.begin(), repertoire.end()}, provider);
  return subsample_repertoire(target_object, repertoire, g.similarities(prototype), limits);
}

}  // namespace cape::grounding
