#include "cape/world/serialize.hpp"

#include <algorithm>

#include "json_access.hpp"

namespace cape::world {

using detail::as;
using detail::child;
using detail::get;
using detail::get_or;
using detail::require;
using detail::require_array;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

ordered_json id_or_null(const std::optional<EntityId>& id) {
  return id ? ordered_json(id->value) : ordered_json(nullptr);
}

std::optional<EntityId> optional_id(const json& obj, const std::string& key,
                                    const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  return EntityId{as<int>(*it, child(path, key))};
}

std::optional<PredicateKind> parse_predicate_kind(std::string_view s) {
  for (auto k : {PredicateKind::close_to, PredicateKind::facing, PredicateKind::holding,
                 PredicateKind::free_hand, PredicateKind::attribute_is, PredicateKind::same_room,
                 PredicateKind::not_enclosed, PredicateKind::has_capability,
                 PredicateKind::posture_is}) {
    if (predicate_kind_name(k) == s) return k;
  }
  return std::nullopt;
}

}  // namespace

ordered_json to_json(const SceneGraph& scene) {
  ordered_json rooms = ordered_json::array();
  for (const auto& r : scene.rooms) {
    rooms.push_back({{"id", r.id.value}, {"name", r.name}});
  }
  ordered_json objects = ordered_json::array();
  for (const auto& o : scene.objects) {
    ordered_json attrs = ordered_json::object();
    for (const auto& [k, v] : o.attributes) attrs[k] = v;
    ordered_json caps = ordered_json::array();
    for (auto c : o.capabilities) caps.push_back(std::string(capability_name(c)));
    ordered_json obj;
    obj["id"] = o.id.value;
    obj["class"] = o.class_name;
    obj["attributes"] = std::move(attrs);
    obj["capabilities"] = std::move(caps);
    obj["room"] = o.room.value;
    if (o.container) obj["in"] = o.container->value;
    if (o.support) obj["on_top_of"] = o.support->value;
    objects.push_back(std::move(obj));
  }
  ordered_json proximity = ordered_json::array();
  for (auto id : scene.agent.proximity) proximity.push_back(id.value);
  ordered_json hands = ordered_json::array();
  for (auto id : scene.agent.hands) hands.push_back(id.value);

  ordered_json agent;
  agent["room"] = scene.agent.room.value;
  agent["proximity"] = std::move(proximity);
  agent["facing"] = id_or_null(scene.agent.facing);
  agent["hands"] = std::move(hands);
  agent["posture"] = std::string(posture_name(scene.agent.posture));

  ordered_json out;
  out["max_hands"] = scene.max_hands;
  out["step_counter"] = scene.step_counter;
  out["rooms"] = std::move(rooms);
  out["objects"] = std::move(objects);
  out["agent"] = std::move(agent);
  return out;
}

SceneGraph scene_from_json(const json& doc, const std::string& path) {
  SceneGraph scene;
  scene.max_hands = get_or<int>(doc, "max_hands", path, 2);
  scene.step_counter = get_or<long>(doc, "step_counter", path, 0);

  const json& rooms = require_array(doc, "rooms", path);
  for (std::size_t i = 0; i < rooms.size(); ++i) {
    const std::string p = child(child(path, "rooms"), i);
    scene.rooms.push_back(Room{EntityId{get<int>(rooms[i], "id", p)},
                               get<std::string>(rooms[i], "name", p)});
  }

  const json& objects = require_array(doc, "objects", path);
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const std::string p = child(child(path, "objects"), i);
    const json& o = objects[i];
    ObjectInstance obj;
    obj.id = EntityId{get<int>(o, "id", p)};
    obj.class_name = get<std::string>(o, "class", p);
    if (auto it = o.find("attributes"); it != o.end()) {
      if (!it->is_object()) throw ParseError(child(p, "attributes"), "expected an object");
      for (const auto& [k, v] : it->items()) {
        obj.attributes[k] = as<bool>(v, child(child(p, "attributes"), k));
      }
    }
    if (auto it = o.find("capabilities"); it != o.end()) {
      if (!it->is_array()) throw ParseError(child(p, "capabilities"), "expected an array");
      for (std::size_t c = 0; c < it->size(); ++c) {
        const std::string cp = child(child(p, "capabilities"), c);
        const auto name = as<std::string>((*it)[c], cp);
        const auto cap = parse_capability(name);
        if (!cap) throw ParseError(cp, "unknown capability '" + name + "'");
        obj.capabilities.insert(*cap);
      }
    }
    obj.room = EntityId{get<int>(o, "room", p)};
    obj.container = optional_id(o, "in", p);
    obj.support = optional_id(o, "on_top_of", p);
    scene.objects.push_back(std::move(obj));
  }

  const json& agent = require(doc, "agent", path);
  const std::string ap = child(path, "agent");
  scene.agent.room = EntityId{get<int>(agent, "room", ap)};
  if (auto it = agent.find("proximity"); it != agent.end()) {
    for (std::size_t i = 0; i < it->size(); ++i) {
      scene.agent.proximity.insert(EntityId{as<int>((*it)[i], child(child(ap, "proximity"), i))});
    }
  }
  scene.agent.facing = optional_id(agent, "facing", ap);
  if (auto it = agent.find("hands"); it != agent.end()) {
    for (std::size_t i = 0; i < it->size(); ++i) {
      scene.agent.hands.push_back(EntityId{as<int>((*it)[i], child(child(ap, "hands"), i))});
    }
  }
  const auto posture = get_or<std::string>(agent, "posture", ap, "standing");
  const auto parsed = parse_posture(posture);
  if (!parsed) throw ParseError(child(ap, "posture"), "unknown posture '" + posture + "'");
  scene.agent.posture = *parsed;

  auto by_id = [](const auto& a, const auto& b) { return a.id < b.id; };
  std::sort(scene.rooms.begin(), scene.rooms.end(), by_id);
  std::sort(scene.objects.begin(), scene.objects.end(), by_id);
  return scene;
}

ordered_json to_json(const GroundedAction& action) {
  ordered_json out;
  out["verb"] = action.verb;
  out["object_id"] = id_or_null(action.object_id);
  out["object_name"] = action.object_name;
  out["rendered"] = action.rendered;
  return out;
}

GroundedAction action_from_json(const json& doc, const std::string& path) {
  GroundedAction a;
  a.verb = get<std::string>(doc, "verb", path);
  a.object_id = optional_id(doc, "object_id", path);
  a.object_name = get_or<std::string>(doc, "object_name", path, "");
  a.rendered = get<std::string>(doc, "rendered", path);
  return a;
}

ordered_json to_json(const Predicate& p) {
  ordered_json out;
  out["kind"] = std::string(predicate_kind_name(p.kind));
  out["target"] = p.on_agent ? "agent" : "object";
  switch (p.kind) {
    case PredicateKind::attribute_is:
      out["attribute"] = p.attribute;
      out["value"] = p.value;
      break;
    case PredicateKind::has_capability:
      out["capability"] = p.capability ? std::string(capability_name(*p.capability)) : "";
      break;
    case PredicateKind::posture_is:
      out["posture"] = std::string(posture_name(p.posture));
      break;
    default:
      break;
  }
  return out;
}

Predicate predicate_from_json(const json& doc, const std::string& path) {
  Predicate p;
  const auto kind = get<std::string>(doc, "kind", path);
  const auto parsed = parse_predicate_kind(kind);
  if (!parsed) throw ParseError(child(path, "kind"), "unknown predicate kind '" + kind + "'");
  p.kind = *parsed;

  const bool agent_only = p.kind == PredicateKind::free_hand || p.kind == PredicateKind::posture_is;
  const auto target = get_or<std::string>(doc, "target", path, agent_only ? "agent" : "object");
  if (target != "agent" && target != "object") {
    throw ParseError(child(path, "target"), "expected 'agent' or 'object'");
  }
  p.on_agent = target == "agent";
  if (p.on_agent && p.kind != PredicateKind::holding && !agent_only) {
    throw ParseError(child(path, "target"), "predicate kind cannot target the agent");
  }

  switch (p.kind) {
    case PredicateKind::attribute_is:
      p.attribute = get<std::string>(doc, "attribute", path);
      p.value = get<bool>(doc, "value", path);
      break;
    case PredicateKind::has_capability: {
      const auto name = get<std::string>(doc, "capability", path);
      if (!name.empty()) {
        p.capability = parse_capability(name);
        if (!p.capability) {
          throw ParseError(child(path, "capability"), "unknown capability '" + name + "'");
        }
      }
      break;
    }
    case PredicateKind::posture_is: {
      const auto name = get<std::string>(doc, "posture", path);
      const auto posture = parse_posture(name);
      if (!posture) throw ParseError(child(path, "posture"), "unknown posture '" + name + "'");
      p.posture = *posture;
      break;
    }
    default:
      break;
  }
  return p;
}

ordered_json to_json(const PreconditionError& error) {
  ordered_json out;
  out["type_id"] = error.type_id;
  out["action"] = to_json(error.action);
  out["violated"] = to_json(error.violated);
  out["message"] = error.message;
  return out;
}

PreconditionError error_from_json(const json& doc, const std::string& path) {
  PreconditionError e;
  e.type_id = get<int>(doc, "type_id", path);
  e.action = action_from_json(require(doc, "action", path), child(path, "action"));
  e.violated = predicate_from_json(require(doc, "violated", path), child(path, "violated"));
  e.message = get<std::string>(doc, "message", path);
  return e;
}

}  // namespace cape::world
