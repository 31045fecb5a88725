#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "cape/world/serialize.hpp"
#include "cape/world/world.hpp"
#include "json_access.hpp"

namespace cape::world {

using detail::child;
using detail::get;
using detail::get_or;
using detail::require_array;
using nlohmann::json;

namespace {

constexpr std::string_view kSlot = "<object>";
const char* const kBaseAttributes[] = {"open", "on", "clean", "grabbed"};

std::size_t count_slots(std::string_view text) {
  std::size_t n = 0;
  for (auto pos = text.find(kSlot); pos != std::string_view::npos;
       pos = text.find(kSlot, pos + kSlot.size())) {
    ++n;
  }
  return n;
}

std::optional<ParamKind> parse_param(std::string_view s) {
  if (s == "object") return ParamKind::object;
  if (s == "room") return ParamKind::room;
  if (s == "location") return ParamKind::location;
  return std::nullopt;
}

std::optional<EffectKind> parse_effect_kind(std::string_view s) {
  static const std::map<std::string_view, EffectKind> kinds{
      {"set_attribute", EffectKind::set_attribute}, {"move_agent", EffectKind::move_agent},
      {"approach", EffectKind::approach},           {"face", EffectKind::face},
      {"pick_up", EffectKind::pick_up},             {"release_on", EffectKind::release_on},
      {"release_in", EffectKind::release_in},       {"set_posture", EffectKind::set_posture},
  };
  auto it = kinds.find(s);
  return it == kinds.end() ? std::nullopt : std::optional<EffectKind>(it->second);
}

SkillTemplate skill_from_json(const json& doc, const std::string& path) {
  SkillTemplate s;
  s.verb = get<std::string>(doc, "verb", path);
  s.arity = get<int>(doc, "arity", path);
  if (s.arity != 0 && s.arity != 1) throw ParseError(child(path, "arity"), "arity must be 0 or 1");
  const auto param = get_or<std::string>(doc, "param", path, "object");
  const auto parsed = parse_param(param);
  if (!parsed) throw ParseError(child(path, "param"), "unknown parameter kind '" + param + "'");
  s.param = *parsed;
  s.text_form = get<std::string>(doc, "text", path);

  if (doc.contains("preconditions")) {
    const json& pre = require_array(doc, "preconditions", path);
    for (std::size_t i = 0; i < pre.size(); ++i) {
      s.preconditions.push_back(predicate_from_json(pre[i], child(child(path, "preconditions"), i)));
    }
  }
  if (doc.contains("effects")) {
    const json& eff = require_array(doc, "effects", path);
    for (std::size_t i = 0; i < eff.size(); ++i) {
      const std::string p = child(child(path, "effects"), i);
      Effect e;
      const auto kind = get<std::string>(eff[i], "kind", p);
      const auto k = parse_effect_kind(kind);
      if (!k) throw ParseError(child(p, "kind"), "unknown effect kind '" + kind + "'");
      e.kind = *k;
      if (e.kind == EffectKind::set_attribute) {
        e.attribute = get<std::string>(eff[i], "attribute", p);
        e.value = get<bool>(eff[i], "value", p);
      } else if (e.kind == EffectKind::set_posture) {
        const auto name = get<std::string>(eff[i], "posture", p);
        const auto posture = parse_posture(name);
        if (!posture) throw ParseError(child(p, "posture"), "unknown posture '" + name + "'");
        e.posture = *posture;
      }
      s.effects.push_back(std::move(e));
    }
  }
  return s;
}

void validate_skills(const std::vector<SkillTemplate>& skills) {
  std::set<std::string> verbs;
  for (const auto& s : skills) {
    if (s.verb.empty()) throw ValidationError("skill with empty verb");
    if (!verbs.insert(s.verb).second) throw ValidationError("duplicate skill verb '" + s.verb + "'");
    if (count_slots(s.text_form) != static_cast<std::size_t>(s.arity)) {
      throw ValidationError("skill '" + s.verb + "': text form must contain exactly " +
                            std::to_string(s.arity) + " <object> slot(s)");
    }
    if (s.arity == 0) {
      for (const auto& p : s.preconditions) {
        if (!p.on_agent) {
          throw ValidationError("skill '" + s.verb + "': arity-0 predicate references a parameter");
        }
      }
      for (const auto& e : s.effects) {
        if (e.kind != EffectKind::set_posture) {
          throw ValidationError("skill '" + s.verb + "': arity-0 effect references a parameter");
        }
      }
    }
  }
}

std::string quote(const std::string& s) { return "'" + s + "'"; }

// Walks container/support links upward from `obj`.
template <typename Fn>
void for_each_enclosing(const SceneGraph& scene, const ObjectInstance& obj, Fn&& fn) {
  const ObjectInstance* cur = &obj;
  for (std::size_t guard = 0; guard <= scene.objects.size(); ++guard) {
    const auto parent = cur->container ? cur->container : cur->support;
    if (!parent) return;
    cur = scene.find_object(*parent);
    if (cur == nullptr) return;
    fn(*cur);
  }
}

std::string object_ref(const ObjectInstance& obj) {
  return "<" + obj.class_name + "> (" + std::to_string(obj.id.value) + ")";
}

std::string character_ref() { return "<character> (" + std::to_string(kCharacterId) + ")"; }

std::string room_ref(const SceneGraph& scene, EntityId id) {
  const auto* room = scene.find_room(id);
  return "<" + (room ? room->name : std::string("none")) + "> (" + std::to_string(id.value) + ")";
}

PreconditionError make_error(int type, const GroundedAction& action, Predicate violated,
                             const std::string& head) {
  return PreconditionError{type, action, std::move(violated),
                           head + " when executing \"" + action_tag(action) + "\""};
}

struct Target {
  const ObjectInstance* object = nullptr;
  const Room* room = nullptr;
};

Target resolve(const SceneGraph& scene, const SkillTemplate& skill, const GroundedAction& action) {
  Target t;
  if (skill.arity == 0 || !action.object_id) return t;
  if (skill.param != ParamKind::room) t.object = scene.find_object(*action.object_id);
  if (skill.param != ParamKind::object) t.room = scene.find_room(*action.object_id);
  return t;
}

// nullopt when the predicate holds. `obj` is null for room targets and arity-0 skills.
std::optional<PreconditionError> evaluate(const SceneGraph& scene, const GroundedAction& action,
                                          const Predicate& p, const ObjectInstance* obj) {
  const auto& agent = scene.agent;
  if (!p.on_agent && obj == nullptr &&
      p.kind != PredicateKind::free_hand && p.kind != PredicateKind::posture_is) {
    return std::nullopt;  // object predicates do not constrain room targets
  }
  switch (p.kind) {
    case PredicateKind::attribute_is:
      if (obj->attribute(p.attribute) != p.value) {
        return make_error(1, action, p, object_ref(*obj) + " is not " + state_word(p.attribute, p.value));
      }
      return std::nullopt;
    case PredicateKind::facing:
      if (agent.facing != obj->id) {
        return make_error(2, action, p, character_ref() + " does not face " + object_ref(*obj));
      }
      return std::nullopt;
    case PredicateKind::same_room:
      if (obj->room != agent.room) {
        return make_error(4, action, p,
                          "char room " + room_ref(scene, agent.room) + " is not node room " +
                              room_ref(scene, obj->room));
      }
      return std::nullopt;
    case PredicateKind::holding: {
      const bool ok = p.on_agent ? !agent.hands.empty() : agent.holding(obj->id);
      if (!ok) {
        const std::string what = obj ? object_ref(*obj) : std::string("<object>");
        return make_error(5, action, p, character_ref() + " is not holding " + what);
      }
      return std::nullopt;
    }
    case PredicateKind::not_enclosed: {
      bool enclosed = false;
      for_each_enclosing(scene, *obj, [&](const ObjectInstance& parent) {
        if (parent.has(Capability::openable) && !parent.attribute("open")) enclosed = true;
      });
      if (enclosed) {
        return make_error(6, action, p, object_ref(*obj) + " is inside other closed thing");
      }
      return std::nullopt;
    }
    case PredicateKind::has_capability:
      if (!p.capability || !obj->has(*p.capability)) {
        const std::string cap = p.capability ? std::string(capability_name(*p.capability)) : "?";
        return make_error(7, action, p, object_ref(*obj) + " does not have " + cap);
      }
      return std::nullopt;
    case PredicateKind::free_hand:
      if (static_cast<int>(agent.hands.size()) >= scene.max_hands) {
        return make_error(8, action, p, character_ref() + " does not have a free hand");
      }
      return std::nullopt;
    case PredicateKind::close_to:
      if (agent.proximity.count(obj->id) == 0) {
        return make_error(9, action, p, character_ref() + " is not close to " + object_ref(*obj));
      }
      return std::nullopt;
    case PredicateKind::posture_is:
      if (agent.posture != p.posture) {
        return make_error(10, action, p, "precondition not satisfied");
      }
      return std::nullopt;
  }
  return std::nullopt;
}

void release_held(SceneGraph& scene, const ObjectInstance& target, bool inside) {
  if (scene.agent.hands.empty()) return;
  const EntityId held = scene.agent.hands.back();
  scene.agent.hands.pop_back();
  ObjectInstance* obj = scene.find_object(held);
  obj->attributes["grabbed"] = false;
  obj->room = target.room;
  obj->container = inside ? std::optional<EntityId>(target.id) : std::nullopt;
  obj->support = inside ? std::nullopt : std::optional<EntityId>(target.id);
}

void add_with_enclosing(SceneGraph& scene, const ObjectInstance& obj) {
  scene.agent.proximity.insert(obj.id);
  for_each_enclosing(scene, obj, [&](const ObjectInstance& parent) {
    scene.agent.proximity.insert(parent.id);
  });
}

}  // namespace

Domain load_domain(std::string_view json_text) {
  const json doc = detail::parse_document(json_text, "domain document");
  if (!doc.is_object()) throw ParseError("", "domain document must be an object");

  if (!doc.contains("max_hands")) throw ParseError("/max_hands", "missing required field");
  Domain domain;
  domain.scene = scene_from_json(doc, "");
  const json& skills = require_array(doc, "skills", "");
  for (std::size_t i = 0; i < skills.size(); ++i) {
    domain.skills.push_back(skill_from_json(skills[i], child("/skills", i)));
  }

  // Base attributes default to false, except `grabbed`, which follows the
  // hands unless the document states it (a contradiction fails validation).
  std::set<int> declared_grabbed;
  for (const auto& raw : doc["objects"]) {
    if (raw.contains("attributes") && raw["attributes"].is_object() &&
        raw["attributes"].contains("grabbed")) {
      declared_grabbed.insert(raw.value("id", 0));
    }
  }
  for (auto& obj : domain.scene.objects) {
    for (const char* attr : kBaseAttributes) obj.attributes.try_emplace(attr, false);
    if (!declared_grabbed.count(obj.id.value)) {
      obj.attributes["grabbed"] = domain.scene.agent.holding(obj.id);
    }
  }

  validate_skills(domain.skills);
  validate_scene(domain.scene);
  return domain;
}

Domain load_domain_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open domain file: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return load_domain(buffer.str());
}

void validate_scene(const SceneGraph& scene) {
  std::set<EntityId> ids;
  for (const auto& r : scene.rooms) {
    if (r.id.value <= 0) throw ValidationError("room ids must be positive");
    if (!ids.insert(r.id).second) {
      throw ValidationError("duplicate id " + std::to_string(r.id.value));
    }
  }
  for (const auto& o : scene.objects) {
    if (o.id.value <= 0) throw ValidationError("object ids must be positive");
    if (!ids.insert(o.id).second) {
      throw ValidationError("duplicate id " + std::to_string(o.id.value));
    }
  }
  if (scene.max_hands < 1) throw ValidationError("max_hands must be at least 1");

  for (const auto& o : scene.objects) {
    const std::string who = "object " + std::to_string(o.id.value) + " " + quote(o.class_name);
    if (!scene.find_room(o.room)) {
      throw ValidationError(who + " references missing room " + std::to_string(o.room.value));
    }
    for (const char* attr : kBaseAttributes) {
      if (!o.attributes.count(attr)) throw ValidationError(who + " lacks attribute " + quote(attr));
    }
    if (o.container && o.support) {
      throw ValidationError(who + " is both inside and on top of another object");
    }
    if (o.container) {
      const auto* c = scene.find_object(*o.container);
      if (!c) throw ValidationError(who + " is inside missing object " + std::to_string(o.container->value));
      if (!c->has(Capability::container)) {
        throw ValidationError(who + " is inside " + quote(c->class_name) + " which is not a CONTAINER");
      }
      if (c->room != o.room) throw ValidationError(who + " is in a different room from its container");
    }
    if (o.support) {
      const auto* s = scene.find_object(*o.support);
      if (!s) throw ValidationError(who + " rests on missing object " + std::to_string(o.support->value));
      if (!s->has(Capability::surface)) {
        throw ValidationError(who + " rests on " + quote(s->class_name) + " which is not a SURFACE");
      }
      if (s->room != o.room) throw ValidationError(who + " is in a different room from its support");
    }
    // Acyclic: following parents must terminate within |objects| hops.
    const ObjectInstance* cur = &o;
    for (std::size_t hops = 0;; ++hops) {
      if (hops > scene.objects.size()) throw ValidationError(who + " is part of a containment cycle");
      const auto parent = cur->container ? cur->container : cur->support;
      if (!parent) break;
      cur = scene.find_object(*parent);
    }
    const bool held = scene.agent.holding(o.id);
    if (o.attribute("grabbed") != held) {
      throw ValidationError(who + (held ? " is held but not grabbed" : " is grabbed but not held"));
    }
  }

  const auto& agent = scene.agent;
  if (!scene.find_room(agent.room)) {
    throw ValidationError("agent references missing room " + std::to_string(agent.room.value));
  }
  if (static_cast<int>(agent.hands.size()) > scene.max_hands) {
    throw ValidationError("agent holds more objects than max_hands");
  }
  for (auto id : agent.hands) {
    const auto* o = scene.find_object(id);
    if (!o) throw ValidationError("agent holds missing object " + std::to_string(id.value));
    if (o->room != agent.room) throw ValidationError("held object is not in the agent's room");
    if (o->container || o->support) throw ValidationError("held object is still placed somewhere");
  }
  for (auto id : agent.proximity) {
    if (!scene.find_object(id)) {
      throw ValidationError("agent proximity references missing object " + std::to_string(id.value));
    }
  }
  if (agent.facing && !agent.proximity.count(*agent.facing)) {
    throw ValidationError("agent faces an object it is not close to");
  }
}

const SkillTemplate* find_skill(std::span<const SkillTemplate> skills, std::string_view verb) {
  for (const auto& s : skills) {
    if (s.verb == verb) return &s;
  }
  return nullptr;
}

std::string action_tag(const GroundedAction& action) {
  std::string verb;
  for (char c : action.verb) {
    if (c != '_') verb.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  std::string out = "[" + verb + "]";
  if (action.object_id || !action.object_name.empty()) {
    std::string name = action.object_name;
    std::replace(name.begin(), name.end(), ' ', '_');
    out += " <" + name + "> (" + std::to_string(action.object_id ? action.object_id->value : 0) + ")";
  }
  return out + " [1]";
}

std::string state_word(std::string_view attribute, bool value) {
  if (attribute == "open") return value ? "open" : "closed";
  if (attribute == "on") return value ? "on" : "off";
  if (attribute == "clean") return value ? "clean" : "dirty";
  if (attribute == "grabbed") return value ? "grabbed" : "released";
  return value ? std::string(attribute) : "not " + std::string(attribute);
}

std::optional<PreconditionError> check_preconditions(const SceneGraph& scene,
                                                     std::span<const SkillTemplate> skills,
                                                     const GroundedAction& action) {
  const SkillTemplate* skill = find_skill(skills, action.verb);
  if (skill == nullptr) {
    std::string verb;
    for (char c : action.verb) verb.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    Predicate violated;
    violated.kind = PredicateKind::has_capability;
    std::string who = "<" + (action.object_name.empty() ? std::string("object") : action.object_name) +
                      "> (" + std::to_string(action.object_id ? action.object_id->value : 0) + ")";
    if (action.object_id) {
      if (const auto* obj = scene.find_object(*action.object_id)) who = object_ref(*obj);
    }
    return make_error(7, action, violated, who + " does not have " + verb);
  }

  const Target target = resolve(scene, *skill, action);
  if (skill->arity == 1 && target.object == nullptr && target.room == nullptr) {
    Predicate violated;
    violated.kind = PredicateKind::same_room;
    return make_error(4, action, violated,
                      "char room " + room_ref(scene, scene.agent.room) +
                          " is not node room <none> (0)");
  }
  for (const auto& p : skill->preconditions) {
    if (auto err = evaluate(scene, action, p, target.object)) return err;
  }
  return std::nullopt;
}

SceneGraph apply_action(const SceneGraph& scene, std::span<const SkillTemplate> skills,
                        const GroundedAction& action) {
  if (auto err = check_preconditions(scene, skills, action)) throw PreconditionViolation(*err);
  const SkillTemplate& skill = *find_skill(skills, action.verb);
  const Target target = resolve(scene, skill, action);

  SceneGraph next = scene;
  auto& agent = next.agent;
  for (const auto& e : skill.effects) {
    switch (e.kind) {
      case EffectKind::set_attribute:
        if (target.object) next.find_object(target.object->id)->attributes[e.attribute] = e.value;
        break;
      case EffectKind::move_agent:
        agent.proximity.clear();
        agent.facing.reset();
        if (target.object) {
          agent.room = target.object->room;
          add_with_enclosing(next, *next.find_object(target.object->id));
        } else if (target.room) {
          agent.room = target.room->id;
        }
        for (auto held : agent.hands) next.find_object(held)->room = agent.room;
        break;
      case EffectKind::approach:
        if (target.object) {
          add_with_enclosing(next, *next.find_object(target.object->id));
          agent.facing = target.object->id;
        }
        break;
      case EffectKind::face:
        if (target.object) {
          agent.proximity.insert(target.object->id);
          agent.facing = target.object->id;
        }
        break;
      case EffectKind::pick_up:
        if (target.object) {
          ObjectInstance* obj = next.find_object(target.object->id);
          agent.hands.push_back(obj->id);
          obj->attributes["grabbed"] = true;
          obj->container.reset();
          obj->support.reset();
          obj->room = agent.room;
        }
        break;
      case EffectKind::release_on:
        if (target.object) release_held(next, *target.object, false);
        break;
      case EffectKind::release_in:
        if (target.object) release_held(next, *target.object, true);
        break;
      case EffectKind::set_posture:
        agent.posture = e.posture;
        break;
    }
  }
  ++next.step_counter;
  return next;
}

std::vector<GroundedAction> enumerate_repertoire(const SceneGraph& scene,
                                                 std::span<const SkillTemplate> skills) {
  std::vector<const SkillTemplate*> ordered;
  for (const auto& s : skills) ordered.push_back(&s);
  std::sort(ordered.begin(), ordered.end(),
            [](const SkillTemplate* a, const SkillTemplate* b) { return a->verb < b->verb; });

  std::vector<GroundedAction> out;
  for (const SkillTemplate* skill : ordered) {
    if (skill->arity == 0) {
      out.push_back(GroundedAction{skill->verb, std::nullopt, "", render_action(*skill, "")});
      continue;
    }
    std::vector<Capability> required;
    for (const auto& p : skill->preconditions) {
      if (p.kind == PredicateKind::has_capability && !p.on_agent && p.capability) {
        required.push_back(*p.capability);
      }
    }
    std::vector<std::pair<EntityId, std::string>> targets;
    if (skill->param != ParamKind::object && required.empty()) {
      for (const auto& r : scene.rooms) targets.emplace_back(r.id, display_name(r.name));
    }
    if (skill->param != ParamKind::room) {
      for (const auto& o : scene.objects) {
        const bool ok = std::all_of(required.begin(), required.end(),
                                    [&](Capability c) { return o.has(c); });
        if (ok) targets.emplace_back(o.id, display_name(o.class_name));
      }
    }
    std::sort(targets.begin(), targets.end());
    for (auto& [id, name] : targets) {
      out.push_back(GroundedAction{skill->verb, id, name, render_action(*skill, name)});
    }
  }
  return out;
}

std::string render_action(const SkillTemplate& skill, std::string_view object_name) {
  if (skill.arity == 0) return skill.text_form;
  return skill.text_prefix() + std::string(object_name) + skill.text_suffix();
}

GroundedAction bind_action(const SceneGraph& scene, const SkillTemplate& skill,
                           std::string_view object_name) {
  GroundedAction a{skill.verb, std::nullopt, std::string(object_name),
                   render_action(skill, object_name)};
  if (skill.arity == 0) {
    a.object_name.clear();
    return a;
  }
  std::optional<EntityId> best;
  auto consider = [&](EntityId id, const std::string& name) {
    if (display_name(name) == object_name && (!best || id < *best)) best = id;
  };
  if (skill.param != ParamKind::object) {
    for (const auto& r : scene.rooms) consider(r.id, r.name);
  }
  if (skill.param != ParamKind::room) {
    for (const auto& o : scene.objects) consider(o.id, o.class_name);
  }
  a.object_id = best;
  return a;
}

std::optional<ParsedAction> parse_rendered(std::span<const SkillTemplate> skills,
                                           std::string_view rendered) {
  const SkillTemplate* best = nullptr;
  std::size_t best_len = 0;
  for (const auto& s : skills) {
    if (s.arity == 0) {
      if (rendered == s.text_form && (best == nullptr || s.text_form.size() >= best_len)) {
        best = &s;
        best_len = s.text_form.size() + 1;  // exact matches outrank prefixes
      }
      continue;
    }
    const std::string prefix = s.text_prefix();
    const std::string suffix = s.text_suffix();
    if (rendered.size() <= prefix.size() + suffix.size()) continue;
    if (rendered.substr(0, prefix.size()) != prefix) continue;
    if (rendered.substr(rendered.size() - suffix.size()) != suffix) continue;
    const std::size_t len = prefix.size() + suffix.size();
    if (best == nullptr || len > best_len) {
      best = &s;
      best_len = len;
    }
  }
  if (best == nullptr) return std::nullopt;
  if (best->arity == 0) return ParsedAction{best->verb, ""};
  const std::string prefix = best->text_prefix();
  const std::string suffix = best->text_suffix();
  return ParsedAction{best->verb, std::string(rendered.substr(
                                      prefix.size(), rendered.size() - prefix.size() - suffix.size()))};
}

std::optional<GroundedAction> parse_action(const SceneGraph& scene,
                                           std::span<const SkillTemplate> skills,
                                           std::string_view rendered) {
  const auto parsed = parse_rendered(skills, rendered);
  if (!parsed) return std::nullopt;
  return bind_action(scene, *find_skill(skills, parsed->verb), parsed->object_name);
}

Replay replay(const SceneGraph& initial, std::span<const SkillTemplate> skills,
              std::span<const GroundedAction> actions) {
  Replay r{initial, 0, std::nullopt};
  for (const auto& a : actions) {
    if (auto err = check_preconditions(r.scene, skills, a)) {
      r.failure = std::move(err);
      break;
    }
    r.scene = apply_action(r.scene, skills, a);
    ++r.executed;
  }
  return r;
}

}  // namespace cape::world
