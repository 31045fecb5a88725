#pragma once

#include <compare>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace cape::world {

// Identifier shared by rooms and objects; unique within a scene.
struct EntityId {
  int value = 0;
  friend auto operator<=>(EntityId, EntityId) = default;
};

// The acting character always renders as "<character> (1)".
inline constexpr int kCharacterId = 1;

enum class Capability { grabbable, openable, switchable, container, surface, sittable };

std::string_view capability_name(Capability c);  // "GRABBABLE", ...
std::optional<Capability> parse_capability(std::string_view s);

enum class Posture { standing, sitting };

std::string_view posture_name(Posture p);
std::optional<Posture> parse_posture(std::string_view s);

struct Room {
  EntityId id;
  std::string name;
  friend bool operator==(const Room&, const Room&) = default;
};

struct ObjectInstance {
  EntityId id;
  std::string class_name;
  std::map<std::string, bool> attributes;  // always has open, on, clean, grabbed
  std::set<Capability> capabilities;
  EntityId room;
  std::optional<EntityId> container;  // inside a CONTAINER
  std::optional<EntityId> support;    // resting on a SURFACE

  bool has(Capability c) const { return capabilities.count(c) != 0; }
  bool attribute(const std::string& name) const;

  friend bool operator==(const ObjectInstance&, const ObjectInstance&) = default;
};

struct AgentState {
  EntityId room;
  std::set<EntityId> proximity;
  std::optional<EntityId> facing;
  std::vector<EntityId> hands;  // oldest grab first
  Posture posture = Posture::standing;

  bool holding(EntityId id) const;
  friend bool operator==(const AgentState&, const AgentState&) = default;
};

struct SceneGraph {
  std::vector<Room> rooms;              // sorted by id
  std::vector<ObjectInstance> objects;  // sorted by id
  AgentState agent;
  int max_hands = 2;
  long step_counter = 0;

  const Room* find_room(EntityId id) const;
  const ObjectInstance* find_object(EntityId id) const;
  ObjectInstance* find_object(EntityId id);

  // Display name of a room or object, empty if unknown.
  std::string name_of(EntityId id) const;

  friend bool operator==(const SceneGraph&, const SceneGraph&) = default;
};

// Which entities a skill parameter may bind to.
enum class ParamKind { object, room, location };

enum class PredicateKind {
  close_to,
  facing,
  holding,
  free_hand,
  attribute_is,
  same_room,
  not_enclosed,
  has_capability,
  posture_is,
};

std::string_view predicate_kind_name(PredicateKind k);

struct Predicate {
  PredicateKind kind = PredicateKind::same_room;
  bool on_agent = false;  // otherwise targets the skill parameter
  std::string attribute;  // attribute_is
  bool value = true;      // attribute_is
  std::optional<Capability> capability;  // has_capability
  Posture posture = Posture::standing;   // posture_is

  friend bool operator==(const Predicate&, const Predicate&) = default;
};

enum class EffectKind {
  set_attribute,  // parameter attribute := value
  move_agent,     // agent goes to the target room, or next to the target object
  approach,       // target (and enclosing containers) join proximity; facing := target
  face,           // facing := target
  pick_up,        // target into hands
  release_on,     // newest held object onto the target surface
  release_in,     // newest held object into the target container
  set_posture,
};

struct Effect {
  EffectKind kind = EffectKind::set_attribute;
  std::string attribute;
  bool value = true;
  Posture posture = Posture::standing;

  friend bool operator==(const Effect&, const Effect&) = default;
};

struct SkillTemplate {
  std::string verb;
  int arity = 1;
  ParamKind param = ParamKind::object;
  std::vector<Predicate> preconditions;
  std::vector<Effect> effects;
  std::string text_form;  // "grab <object>"

  std::string text_prefix() const;  // part before the slot
  std::string text_suffix() const;  // part after the slot
};

// A skill bound to a concrete entity; `rendered` is the admissible-action string.
struct GroundedAction {
  std::string verb;
  std::optional<EntityId> object_id;
  std::string object_name;  // display form, e.g. "kitchen counter"
  std::string rendered;

  friend bool operator==(const GroundedAction&, const GroundedAction&) = default;
};

struct PreconditionError {
  int type_id = 10;
  GroundedAction action;
  Predicate violated;
  std::string message;
};

// Lowercase class name with '_' shown as ' '.
std::string display_name(std::string_view class_name);

}  // namespace cape::world
