#include <algorithm>
#include <array>
#include <utility>

#include "cape/world/types.hpp"

namespace cape::world {

namespace {

constexpr std::array<std::pair<Capability, std::string_view>, 6> kCapabilities{{
    {Capability::grabbable, "GRABBABLE"},
    {Capability::openable, "OPENABLE"},
    {Capability::switchable, "SWITCHABLE"},
    {Capability::container, "CONTAINER"},
    {Capability::surface, "SURFACE"},
    {Capability::sittable, "SITTABLE"},
}};

constexpr std::string_view kSlot = "<object>";

template <typename T>
auto find_by_id(T& items, EntityId id) -> decltype(items.data()) {
  auto it = std::lower_bound(items.begin(), items.end(), id,
                             [](const auto& item, EntityId key) { return item.id < key; });
  return (it != items.end() && it->id == id) ? &*it : nullptr;
}

}  // namespace

std::string_view capability_name(Capability c) {
  for (const auto& [cap, name] : kCapabilities) {
    if (cap == c) return name;
  }
  return "UNKNOWN";
}

std::optional<Capability> parse_capability(std::string_view s) {
  for (const auto& [cap, name] : kCapabilities) {
    if (name == s) return cap;
  }
  return std::nullopt;
}

std::string_view posture_name(Posture p) {
  return p == Posture::sitting ? "sitting" : "standing";
}

std::optional<Posture> parse_posture(std::string_view s) {
  if (s == "standing") return Posture::standing;
  if (s == "sitting") return Posture::sitting;
  return std::nullopt;
}

std::string_view predicate_kind_name(PredicateKind k) {
  switch (k) {
    case PredicateKind::close_to: return "close_to";
    case PredicateKind::facing: return "facing";
    case PredicateKind::holding: return "holding";
    case PredicateKind::free_hand: return "free_hand";
    case PredicateKind::attribute_is: return "attribute_is";
    case PredicateKind::same_room: return "same_room";
    case PredicateKind::not_enclosed: return "not_enclosed";
    case PredicateKind::has_capability: return "has_capability";
    case PredicateKind::posture_is: return "posture_is";
  }
  return "unknown";
}

bool ObjectInstance::attribute(const std::string& name) const {
  auto it = attributes.find(name);
  return it != attributes.end() && it->second;
}

bool AgentState::holding(EntityId id) const {
  return std::find(hands.begin(), hands.end(), id) != hands.end();
}

const Room* SceneGraph::find_room(EntityId id) const { return find_by_id(rooms, id); }

const ObjectInstance* SceneGraph::find_object(EntityId id) const {
  return find_by_id(objects, id);
}

ObjectInstance* SceneGraph::find_object(EntityId id) { return find_by_id(objects, id); }

std::string SceneGraph::name_of(EntityId id) const {
  if (const auto* room = find_room(id)) return display_name(room->name);
  if (const auto* obj = find_object(id)) return display_name(obj->class_name);
  return {};
}

std::string SkillTemplate::text_prefix() const {
  const auto pos = text_form.find(kSlot);
  return pos == std::string::npos ? text_form : text_form.substr(0, pos);
}

std::string SkillTemplate::text_suffix() const {
  const auto pos = text_form.find(kSlot);
  return pos == std::string::npos ? std::string() : text_form.substr(pos + kSlot.size());
}

std::string display_name(std::string_view class_name) {
  std::string out(class_name);
  std::replace(out.begin(), out.end(), '_', ' ');
  return out;
}

}  // namespace cape::world
