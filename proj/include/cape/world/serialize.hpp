#pragma once

#include "cape/world/types.hpp"
#include "json.hpp"

namespace cape::world {

// Field order is fixed so serialized traces are byte-stable.
nlohmann::ordered_json to_json(const SceneGraph& scene);
nlohmann::ordered_json to_json(const GroundedAction& action);
nlohmann::ordered_json to_json(const Predicate& predicate);
nlohmann::ordered_json to_json(const PreconditionError& error);

// Reads rooms/objects/agent/max_hands from a document; `path` prefixes
// ParseError locations. Does not run validate_scene.
SceneGraph scene_from_json(const nlohmann::json& doc, const std::string& path = "");
GroundedAction action_from_json(const nlohmann::json& doc, const std::string& path = "");
Predicate predicate_from_json(const nlohmann::json& doc, const std::string& path = "");
PreconditionError error_from_json(const nlohmann::json& doc, const std::string& path = "");

}  // namespace cape::world
