#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cape/embed/embedding.hpp"
#include "cape/llm/completion.hpp"
#include "cape/world/types.hpp"
#include "json.hpp"

namespace cape::grounding {

// `affordance` marks SayCan selections (probability times affordance); it is
// recorded in traces but cannot drive grounding.
enum class Scorer { weighted, geometric, affordance };

std::string_view scorer_name(Scorer s);
std::optional<Scorer> parse_scorer(std::string_view s);

// C + beta * P. Unbounded below. Throws ContractViolation for C outside [-1, 1].
double score_weighted(double similarity, double mean_logprob, double beta);

// ((C + 1) / 2) * exp(P), in [0, 1]. Throws ContractViolation for P > 0 or
// C outside [-1, 1].
double score_geometric(double similarity, double mean_logprob);

struct GroundingConfig {
  Scorer scorer = Scorer::geometric;
  double beta = 0.3;
  std::optional<double> threshold;  // defaults: 0.4 geometric, 0.0 weighted

  double effective_threshold() const;
  double score(double similarity, double mean_logprob) const;
};

struct ScoredCandidate {
  std::string free_text;
  world::GroundedAction admissible;
  double similarity = 0.0;
  double mean_logprob = 0.0;
  double score = 0.0;
  Scorer scorer = Scorer::geometric;
};

nlohmann::ordered_json to_json(const ScoredCandidate& c);
ScoredCandidate candidate_from_json(const nlohmann::json& doc, const std::string& path = "");

// Orders candidates best-first: score descending, then rendered string, then object id.
bool ranks_before(const ScoredCandidate& a, const ScoredCandidate& b);

struct GroundingOutcome {
  ScoredCandidate best;
  bool below_threshold = false;
};

// A repertoire with its embeddings, built once and reused for every step.
class Grounder {
 public:
  // Throws ConfigError for an empty repertoire.
  Grounder(std::vector<world::GroundedAction> repertoire, embed::EmbeddingProvider& provider);

  const std::vector<world::GroundedAction>& repertoire() const noexcept { return repertoire_; }

  // Cosine similarity of `text` to every repertoire entry, in repertoire order.
  std::vector<double> similarities(std::string_view text) const;

  // One candidate per admissible action, carrying the sample that scores it
  // highest; sorted with ranks_before. Samples with blank text are ignored;
  // throws InputError when none remain.
  std::vector<ScoredCandidate> rank(std::span<const llm::CompletionSample> samples,
                                    const GroundingConfig& config) const;

  // Argmax of rank(); below_threshold when its score is under the threshold.
  GroundingOutcome ground(std::span<const llm::CompletionSample> samples,
                          const GroundingConfig& config) const;

 private:
  std::vector<world::GroundedAction> repertoire_;
  embed::EmbeddingProvider* provider_;
  embed::EmbeddingIndex index_;
};

GroundingOutcome ground_step(std::span<const llm::CompletionSample> samples,
                             std::span<const world::GroundedAction> repertoire,
                             embed::EmbeddingProvider& provider, const GroundingConfig& config);

struct SubsampleLimits {
  std::size_t most_similar = 500;
  std::size_t target_object = 1000;
  std::size_t passthrough = 1500;  // repertoires this small are returned whole
};

// Union of the `most_similar` entries closest to the prototype and up to
// `target_object` entries naming the target object (closest first), in
// repertoire order. `similarities` is aligned with `repertoire`.
std::vector<world::GroundedAction> subsample_repertoire(
    std::string_view target_object, std::span<const world::GroundedAction> repertoire,
    std::span<const double> similarities, const SubsampleLimits& limits = {});

std::vector<world::GroundedAction> subsample_repertoire(
    std::string_view prototype, std::string_view target_object,
    std::span<const world::GroundedAction> repertoire, embed::EmbeddingProvider& provider,
    const SubsampleLimits& limits = {});

}  // namespace cape::grounding
