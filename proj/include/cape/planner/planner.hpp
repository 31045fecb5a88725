#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "cape/embed/embedding.hpp"
#include "cape/grounding/grounding.hpp"
#include "cape/llm/completion.hpp"
#include "cape/planner/prompts.hpp"
#include "cape/planner/trace.hpp"
#include "cape/world/world.hpp"

namespace cape::planner {

enum class Strategy { open_loop, resample, cape };
std::string_view strategy_name(Strategy s);

struct PlannerConfig {
  Strategy strategy = Strategy::cape;
  PromptStyle style = PromptStyle::explicit_cause;
  bool few_shot = false;
  bool raw_error_messages = false;  // explicit style: simulator message instead of paraphrase
  grounding::GroundingConfig grounding;
  int k = 5;  // re-sampling depth
  int max_steps = 20;
  int max_corrections_per_step = 3;
  int max_total_corrections = 10;
  std::uint64_t seed = 0;
  // Prompt and stop fields are filled per call; the rest is passed through.
  llm::CompletionRequest sampling;

  // Throws ConfigError for non-positive limits.
  void validate() const;
};

struct PlanningContext {
  const world::Domain& domain;
  llm::CompletionBackend& llm;
  embed::EmbeddingProvider& embedder;
  std::span<const Demonstration> demonstrations;
  std::span<const CorrectionExample> correction_examples;  // needed when few_shot
  // Prebuilt grounder over the domain repertoire; built per call when null.
  const grounding::Grounder* grounder = nullptr;
};

// Runs one episode. Backend failures end the episode with
// Termination::backend_failure and keep the partial trace.
PlanTrace plan(const std::string& task, const PlanningContext& ctx, const PlannerConfig& config);

}  // namespace cape::planner
