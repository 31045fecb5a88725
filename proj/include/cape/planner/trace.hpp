#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cape/grounding/grounding.hpp"
#include "cape/world/types.hpp"
#include "json.hpp"

namespace cape::planner {

enum class Termination {
  completed,              // the model ended the plan (blank step, or "done" won)
  threshold,              // best grounding score fell below the threshold
  max_steps,
  exhausted_corrections,  // a step could not be repaired within the caps
  backend_failure,
  empty_program,          // blank first step; error type 3
};

std::string_view termination_name(Termination t);
std::optional<Termination> parse_termination(std::string_view s);

inline constexpr int kEmptyProgramErrorType = 3;

struct PlanStep {
  world::GroundedAction action;
  grounding::ScoredCandidate candidate;
};

struct CorrectionEvent {
  std::size_t step = 0;  // 1-based index of the step being repaired
  world::PreconditionError error;
  std::string prompt;    // corrective prompt; empty for re-sampling
  std::string feedback;  // the error line shown to the model; empty for re-sampling
  bool resolved = false; // whether that step was eventually executed
};

struct PlanTrace {
  std::string task;
  std::string method;
  std::uint64_t seed = 0;
  std::vector<PlanStep> steps;
  std::vector<CorrectionEvent> corrections;
  std::uint64_t completion_calls = 0;
  std::uint64_t scoring_calls = 0;
  Termination termination = Termination::completed;
  std::string detail;  // human-readable cause for failures
  world::SceneGraph final_scene;

  // 3 for empty_program, nothing otherwise.
  std::optional<int> error_type() const;
  std::vector<std::string> step_texts() const;
  std::vector<world::GroundedAction> actions() const;
};

// Stable field order; round-trips through trace_from_json.
nlohmann::ordered_json to_json(const PlanTrace& trace);
PlanTrace trace_from_json(const nlohmann::json& doc, const std::string& path = "");

// Numbered plan with "Error: ... A correct step would be to" lines before
// each repaired step.
std::string render_plan_text(const PlanTrace& trace);

}  // namespace cape::planner
