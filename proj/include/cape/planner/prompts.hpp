#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cape/embed/embedding.hpp"
#include "cape/world/types.hpp"
#include "json.hpp"

namespace cape::planner {

struct Demonstration {
  std::string task;
  std::vector<std::string> steps;  // plain step text, without "Step N:" labels
};

// demos.json: [{"task": ..., "steps": [...]}]. Steps may carry "Step N:"
// labels, which must then be numbered 1, 2, ... and are stripped.
// Throws ParseError/ValidationError for an empty set or an empty plan.
std::vector<Demonstration> load_demonstrations(const nlohmann::json& doc);
std::vector<Demonstration> load_demonstrations_file(const std::filesystem::path& path);

struct CorrectionExample {
  std::string task;
  std::string failed_step;
  std::string error;
  std::string corrective_action;
};

// corrections.json: [{"task", "failed_step", "error", "corrective_action"}].
std::vector<CorrectionExample> load_correction_examples(const nlohmann::json& doc);
std::vector<CorrectionExample> load_correction_examples_file(const std::filesystem::path& path);

enum class PromptStyle { success_only, implicit_cause, explicit_cause };
std::string_view prompt_style_name(PromptStyle s);
std::optional<PromptStyle> parse_prompt_style(std::string_view s);

// The demonstration whose task name is most similar to `query_task`; ties
// go to the lexicographically smaller task name. Throws InputError when empty.
const Demonstration& select_demonstration(std::string_view query_task,
                                          std::span<const Demonstration> demos,
                                          embed::EmbeddingProvider& embedder);

// The three entries whose failed_step is most similar to `failed_step`, best
// first. Throws ConfigError with fewer than three entries.
std::vector<CorrectionExample> select_correction_examples(
    std::string_view failed_step, std::span<const CorrectionExample> examples,
    embed::EmbeddingProvider& embedder);

// "Task: <task>\nStep 1: a\nStep 2: b\n" for the listed steps.
std::string render_task_block(std::string_view task, std::span<const std::string> steps);

// Demonstration block, a blank line, then the query task with its executed
// steps and an open "Step N:" label.
std::string build_step_prompt(const Demonstration& example, std::string_view query_task,
                              std::span<const std::string> executed_steps);

inline std::string build_initial_prompt(const Demonstration& example,
                                        std::string_view query_task) {
  return build_step_prompt(example, query_task, {});
}

// Inverse of the task-block layout: every "Task:" block with its step texts.
std::vector<Demonstration> parse_prompt(std::string_view prompt);

// First-person reason for a precondition failure ("I do not have a free hand").
// The scene is the one the failed action was checked against.
std::string explain_error(const world::PreconditionError& error, const world::SceneGraph& scene);

// The line that replaces the failed step in a corrective prompt, without the
// "Error: " prefix and the continuation cue.
std::string feedback_line(PromptStyle style, const world::PreconditionError& error,
                          const world::SceneGraph& scene, bool raw_error_message = false);

inline constexpr std::string_view kCorrectionCue = "A correct step would be to";

// [few-shot examples] + task block with executed steps + "Error: <feedback>.
// A correct step would be to\nStep N:".
std::string build_corrective_prompt(std::string_view task,
                                    std::span<const std::string> executed_steps,
                                    std::string_view feedback,
                                    std::span<const CorrectionExample> examples = {});

}  // namespace cape::planner
