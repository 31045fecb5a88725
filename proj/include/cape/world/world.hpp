#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cape/error.hpp"
#include "cape/world/types.hpp"

namespace cape::world {

struct Domain {
  std::vector<SkillTemplate> skills;
  SceneGraph scene;
};

// Parses and validates a domain document. Throws ParseError (schema) or
// ValidationError (dangling references, broken invariants).
Domain load_domain(std::string_view json_text);
Domain load_domain_file(const std::filesystem::path& path);

const SkillTemplate* find_skill(std::span<const SkillTemplate> skills, std::string_view verb);

// Thrown by apply_action when a precondition does not hold.
class PreconditionViolation : public ContractViolation {
 public:
  explicit PreconditionViolation(PreconditionError error)
      : ContractViolation(error.message), error_(std::move(error)) {}
  const PreconditionError& error() const noexcept { return error_; }

 private:
  PreconditionError error_;
};

// First violated precondition in declaration order, or nullopt on success.
// Unknown verbs are reported as invalid actions (type 7).
std::optional<PreconditionError> check_preconditions(const SceneGraph& scene,
                                                     std::span<const SkillTemplate> skills,
                                                     const GroundedAction& action);

// Returns the successor scene. The input is never modified.
SceneGraph apply_action(const SceneGraph& scene, std::span<const SkillTemplate> skills,
                        const GroundedAction& action);

// Arity-1 skills crossed with every compatible entity, plus arity-0 skills;
// sorted by verb, then entity id.
std::vector<GroundedAction> enumerate_repertoire(const SceneGraph& scene,
                                                 std::span<const SkillTemplate> skills);

std::string render_action(const SkillTemplate& skill, std::string_view object_name);

// Binds `object_name` to the lowest-id entity of that name the skill accepts.
// Unresolvable names keep object_id empty.
GroundedAction bind_action(const SceneGraph& scene, const SkillTemplate& skill,
                           std::string_view object_name);

// Recovers (verb, object name) from an admissible-action string; the longest
// matching text prefix wins.
struct ParsedAction {
  std::string verb;
  std::string object_name;
};
std::optional<ParsedAction> parse_rendered(std::span<const SkillTemplate> skills,
                                           std::string_view rendered);

// parse_rendered + bind_action.
std::optional<GroundedAction> parse_action(const SceneGraph& scene,
                                           std::span<const SkillTemplate> skills,
                                           std::string_view rendered);

// Executes `actions` in order, stopping at the first failure.
struct Replay {
  SceneGraph scene;
  std::size_t executed = 0;
  std::optional<PreconditionError> failure;
};
Replay replay(const SceneGraph& initial, std::span<const SkillTemplate> skills,
              std::span<const GroundedAction> actions);

// Checks the scene invariants; throws ValidationError naming the broken one.
void validate_scene(const SceneGraph& scene);

// Error-message rendering in the simulator's template style.
std::string action_tag(const GroundedAction& action);  // "[GRAB] <milk> (5) [1]"
std::string state_word(std::string_view attribute, bool value);  // ("open", false) -> "closed"

}  // namespace cape::world
