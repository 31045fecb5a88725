#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>

#include "cape/embed/embedding.hpp"
#include "cape/grounding/grounding.hpp"
#include "cape/llm/completion.hpp"
#include "cape/planner/prompts.hpp"
#include "cape/planner/trace.hpp"
#include "cape/world/world.hpp"

namespace cape::saycan {

enum class AffordanceMode { perfect, noisy };
std::string_view affordance_mode_name(AffordanceMode m);

// Precondition oracle, optionally corrupted. Noisy mode takes exactly one
// draw from its stream per query, so a seed fixes the whole flip sequence.
class AffordanceModel {
 public:
  static constexpr double kNoisyFlipProbability = 0.06;

  explicit AffordanceModel(AffordanceMode mode, std::uint64_t seed = 0,
                           double flip_probability = kNoisyFlipProbability);

  // 1 when the action is judged executable, else 0.
  int query(const world::SceneGraph& scene, std::span<const world::SkillTemplate> skills,
            const world::GroundedAction& action);

  AffordanceMode mode() const noexcept { return mode_; }
  double flip_probability() const noexcept { return flip_probability_; }
  std::uint64_t queries() const noexcept { return queries_; }
  std::uint64_t flips() const noexcept { return flips_; }

 private:
  bool draw_flip();

  AffordanceMode mode_;
  double flip_probability_;
  std::mt19937_64 rng_;
  std::uint64_t queries_ = 0;
  std::uint64_t flips_ = 0;
};

struct SayCanConfig {
  bool use_subsampling = true;
  int max_steps = 20;
  std::string done_skill = "done";
  std::uint64_t seed = 0;
  grounding::SubsampleLimits limits;

  void validate() const;
};

struct SayCanContext {
  const world::Domain& domain;
  llm::CompletionBackend& llm;
  embed::EmbeddingProvider& embedder;
  std::span<const planner::Demonstration> demonstrations;
};

// Object name from the repertoire mentioned last in `prototype` (whole words,
// case-insensitive); a longer name wins when two end at the same place.
// Empty when nothing matches.
std::string target_object(std::string_view prototype,
                          std::span<const world::GroundedAction> repertoire);

// Each step scores every candidate (plus the done action) as
// exp(logprob) * affordance and takes the best; stops when done wins.
// Steps the affordance model wrongly admitted are recorded but change nothing.
planner::PlanTrace plan_saycan(const std::string& task, const SayCanContext& ctx,
                               const SayCanConfig& config, AffordanceModel& model);

}  // namespace cape::saycan
