#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "cape/world/serialize.hpp"
#include "cape/world/world.hpp"
#include "json.hpp"
#include "support.hpp"

using namespace cape::world;
using cape::testing::data_path;
using cape::testing::read_text;

namespace {

GroundedAction act(const Domain& d, const std::string& text) {
  auto a = parse_action(d.scene, d.skills, text);
  if (!a) throw std::runtime_error("unparseable: " + text);
  return *a;
}

SceneGraph run(const Domain& d, const std::vector<std::string>& steps) {
  SceneGraph s = d.scene;
  for (const auto& step : steps) s = apply_action(s, d.skills, act(d, step));
  return s;
}

const char* kMinimal = R"({
  "max_hands": 2,
  "rooms": [{"id": 1, "name": "kitchen"}],
  "objects": [],
  "agent": {"room": 1},
  "skills": [{"verb": "stand_up", "arity": 0, "text": "stand up",
              "preconditions": [{"kind": "posture_is", "posture": "sitting"}],
              "effects": [{"kind": "set_posture", "posture": "standing"}]}]
})";

}  // namespace

TEST(LoadDomain, MinimalDocument) {
  auto d = load_domain(kMinimal);
  EXPECT_TRUE(d.scene.objects.empty());
  ASSERT_EQ(d.skills.size(), 1u);
  auto rep = enumerate_repertoire(d.scene, d.skills);
  ASSERT_EQ(rep.size(), 1u);
  EXPECT_EQ(rep[0].rendered, "stand up");
}

TEST(LoadDomain, HouseholdDomainShape) {
  auto d = load_domain_file(data_path("domains/household.json"));
  EXPECT_EQ(d.skills.size(), 15u);
  EXPECT_GE(d.scene.objects.size(), 9u);
  for (const char* verb : {"walk", "find", "grab", "put_on", "put_in", "open", "close",
                           "switch_on", "switch_off", "sit", "stand_up", "turn_to", "look_at",
                           "touch", "drink"}) {
    EXPECT_NE(find_skill(d.skills, verb), nullptr) << verb;
  }
}

TEST(LoadDomain, RobotDomainRepertoireBound) {
  auto d = load_domain_file(data_path("domains/robot.json"));
  EXPECT_EQ(d.skills.size(), 14u);
  EXPECT_EQ(d.scene.max_hands, 1);
  // Nine objects, fourteen skills: at most 13 arity-1 skills per object plus stand_up.
  ASSERT_EQ(d.scene.objects.size(), 9u);
  auto rep = enumerate_repertoire(d.scene, d.skills);
  EXPECT_LE(rep.size(), 9u * 13u + 1u + d.scene.rooms.size());
  std::size_t object_entries = 0;
  for (const auto& a : rep) {
    if (a.object_id && d.scene.find_object(*a.object_id)) ++object_entries;
  }
  EXPECT_LE(object_entries, 9u * 13u);
}

TEST(LoadDomain, MissingRoomIsValidationError) {
  auto doc = nlohmann::json::parse(kMinimal);
  doc["objects"].push_back({{"id", 5}, {"class", "cup"}, {"room", 42}});
  EXPECT_THROW(load_domain(doc.dump()), cape::ValidationError);
}

TEST(LoadDomain, SchemaErrorNamesPath) {
  auto doc = nlohmann::json::parse(kMinimal);
  doc["objects"].push_back({{"id", 5}, {"class", "cup"}, {"room", "kitchen"}});
  try {
    load_domain(doc.dump());
    FAIL() << "expected ParseError";
  } catch (const cape::ParseError& e) {
    EXPECT_EQ(e.path(), "/objects/0/room");
  }
}

TEST(LoadDomain, ContainerWithoutCapabilityRejected) {
  auto doc = nlohmann::json::parse(kMinimal);
  doc["objects"].push_back({{"id", 5}, {"class", "cup"}, {"room", 1}});
  doc["objects"].push_back({{"id", 6}, {"class", "spoon"}, {"room", 1}, {"in", 5}});
  EXPECT_THROW(load_domain(doc.dump()), cape::ValidationError);
}

TEST(LoadDomain, ContainmentCycleRejected) {
  auto doc = nlohmann::json::parse(kMinimal);
  doc["objects"].push_back(
      {{"id", 5}, {"class", "box"}, {"room", 1}, {"capabilities", {"CONTAINER"}}, {"in", 6}});
  doc["objects"].push_back(
      {{"id", 6}, {"class", "crate"}, {"room", 1}, {"capabilities", {"CONTAINER"}}, {"in", 5}});
  EXPECT_THROW(load_domain(doc.dump()), cape::ValidationError);
}

TEST(LoadDomain, FacingOutsideProximityRejected) {
  auto doc = nlohmann::json::parse(kMinimal);
  doc["objects"].push_back({{"id", 5}, {"class", "cup"}, {"room", 1}});
  doc["agent"]["facing"] = 5;
  EXPECT_THROW(load_domain(doc.dump()), cape::ValidationError);
}

TEST(LoadDomain, TooManyHeldObjectsRejected) {
  auto doc = nlohmann::json::parse(kMinimal);
  doc["max_hands"] = 1;
  doc["objects"].push_back({{"id", 5}, {"class", "cup"}, {"room", 1}});
  doc["objects"].push_back({{"id", 6}, {"class", "mug"}, {"room", 1}});
  doc["agent"]["hands"] = {5, 6};
  EXPECT_THROW(load_domain(doc.dump()), cape::ValidationError);
}

TEST(LoadDomain, MalformedJsonIsParseError) {
  EXPECT_THROW(load_domain("{\"rooms\": ["), cape::ParseError);
}

// Every case in the taxonomy fixture file must produce exactly its type and
// message after its setup steps run cleanly.
TEST(Taxonomy, FixtureSuiteCoversEveryWorldType) {
  auto doc = nlohmann::json::parse(read_text(data_path("fixtures/taxonomy.json")));
  auto d = load_domain_file(data_path("fixtures/" + doc["domain"].get<std::string>()));
  std::set<int> seen;
  for (const auto& c : doc["cases"]) {
    std::vector<std::string> setup = c["setup"];
    SceneGraph s = run(d, setup);
    auto a = parse_action(s, d.skills, c["action"].get<std::string>());
    ASSERT_TRUE(a) << c["action"];
    auto err = check_preconditions(s, d.skills, *a);
    ASSERT_TRUE(err) << c["action"];
    EXPECT_EQ(err->type_id, c["type_id"].get<int>());
    EXPECT_EQ(err->message, c["message"].get<std::string>());
    seen.insert(err->type_id);
  }
  EXPECT_EQ(seen, (std::set<int>{1, 2, 4, 5, 6, 7, 8, 9, 10}));
}

TEST(Taxonomy, UnknownVerbIsInvalidAction) {
  auto d = load_domain_file(data_path("fixtures/kitchen_small.json"));
  GroundedAction a{"fly", EntityId{1}, "milk", "fly milk"};
  auto err = check_preconditions(d.scene, d.skills, a);
  ASSERT_TRUE(err);
  EXPECT_EQ(err->type_id, 7);
  EXPECT_EQ(err->message, "<milk> (1) does not have FLY when executing \"[FLY] <milk> (1) [1]\"");
}

TEST(Taxonomy, WalkWithEmptyHandsSucceeds) {
  auto d = load_domain_file(data_path("domains/household.json"));
  for (const auto& room : d.scene.rooms) {
    SceneGraph s = run(d, {"walk to " + display_name(room.name)});
    auto a = act(d, "walk to kitchen");
    EXPECT_FALSE(check_preconditions(s, d.skills, a)) << room.name;
  }
}

TEST(ApplyAction, OpenSetsAttributeAndCountsStep) {
  auto d = load_domain_file(data_path("fixtures/kitchen_small.json"));
  SceneGraph s = run(d, {"find fridge"});
  SceneGraph t = apply_action(s, d.skills, act(d, "open fridge"));
  EXPECT_TRUE(t.find_object(EntityId{2})->attribute("open"));
  EXPECT_EQ(t.step_counter, s.step_counter + 1);
}

TEST(ApplyAction, GrabPutsObjectInHand) {
  auto d = load_domain_file(data_path("fixtures/kitchen_small.json"));
  SceneGraph s = run(d, {"find fridge", "open fridge", "find milk", "grab milk"});
  EXPECT_EQ(s.agent.hands, std::vector<EntityId>{EntityId{1}});
  const auto* milk = s.find_object(EntityId{1});
  EXPECT_TRUE(milk->attribute("grabbed"));
  EXPECT_FALSE(milk->container);
  EXPECT_NO_THROW(validate_scene(s));
}

TEST(ApplyAction, OpenTwiceIsUnflippedState) {
  auto d = load_domain_file(data_path("fixtures/kitchen_small.json"));
  SceneGraph s = run(d, {"find fridge", "open fridge"});
  auto err = check_preconditions(s, d.skills, act(d, "open fridge"));
  ASSERT_TRUE(err);
  EXPECT_EQ(err->type_id, 1);
  EXPECT_EQ(err->message, "<fridge> (2) is not closed when executing \"[OPEN] <fridge> (2) [1]\"");
}

TEST(ApplyAction, FailureLeavesSceneUntouched) {
  auto d = load_domain_file(data_path("fixtures/kitchen_small.json"));
  SceneGraph s = run(d, {"find milk"});
  const auto before = to_json(s).dump();
  try {
    apply_action(s, d.skills, act(d, "grab milk"));
    FAIL() << "expected PreconditionViolation";
  } catch (const PreconditionViolation& v) {
    EXPECT_EQ(v.error().type_id, 6);
  }
  EXPECT_EQ(to_json(s).dump(), before);
}

TEST(ApplyAction, PutInAndWalkCarryState) {
  auto d = load_domain_file(data_path("domains/household.json"));
  SceneGraph s = run(d, {"walk to kitchen", "find cup", "open cabinet", "grab cup",
                         "walk to living room", "find coffee table", "put it on coffee table"});
  const auto* cup = s.find_object(EntityId{17});
  EXPECT_EQ(cup->room, EntityId{2});
  EXPECT_EQ(cup->support, EntityId{23});
  EXPECT_TRUE(s.agent.hands.empty());
  EXPECT_NO_THROW(validate_scene(s));
}

TEST(ApplyAction, EveryRepertoireOutcomeKeepsInvariants) {
  auto d = load_domain_file(data_path("domains/household.json"));
  // Walk a deterministic pseudo-random trajectory and check invariants after each success.
  SceneGraph s = d.scene;
  std::size_t applied = 0;
  for (int i = 0; i < 400; ++i) {
    auto rep = enumerate_repertoire(s, d.skills);
    const auto& a = rep[(i * 7919u) % rep.size()];
    if (check_preconditions(s, d.skills, a)) continue;
    s = apply_action(s, d.skills, a);
    ++applied;
    ASSERT_NO_THROW(validate_scene(s)) << a.rendered;
  }
  EXPECT_GT(applied, 20u);
}

TEST(Repertoire, ArityZeroOnly) {
  auto d = load_domain(kMinimal);
  auto rep = enumerate_repertoire(d.scene, d.skills);
  ASSERT_EQ(rep.size(), 1u);
  EXPECT_EQ(rep[0].verb, "stand_up");
  EXPECT_FALSE(rep[0].object_id);
}

TEST(Repertoire, CapabilityFilterAndOrder) {
  auto d = load_domain_file(data_path("domains/household.json"));
  auto rep = enumerate_repertoire(d.scene, d.skills);
  for (const auto& a : rep) {
    if (a.verb == "grab") {
      EXPECT_TRUE(d.scene.find_object(*a.object_id)->has(Capability::grabbable)) << a.rendered;
    }
  }
  EXPECT_TRUE(std::is_sorted(rep.begin(), rep.end(), [](const auto& x, const auto& y) {
    if (x.verb != y.verb) return x.verb < y.verb;
    return x.object_id.value_or(EntityId{0}) < y.object_id.value_or(EntityId{0});
  }));
}

TEST(Repertoire, RenderedStringsRoundTrip) {
  for (const char* file : {"domains/household.json", "domains/robot.json",
                           "fixtures/kitchen_small.json"}) {
    auto d = load_domain_file(data_path(file));
    for (const auto& a : enumerate_repertoire(d.scene, d.skills)) {
      auto parsed = parse_rendered(d.skills, a.rendered);
      ASSERT_TRUE(parsed) << a.rendered;
      EXPECT_EQ(parsed->verb, a.verb);
      EXPECT_EQ(parsed->object_name, a.object_name);
      EXPECT_EQ(render_action(*find_skill(d.skills, parsed->verb), parsed->object_name),
                a.rendered);
    }
  }
}

TEST(Repertoire, BindPicksLowestId) {
  auto doc = nlohmann::json::parse(kMinimal);
  doc["objects"].push_back({{"id", 9}, {"class", "cup"}, {"room", 1}});
  doc["objects"].push_back({{"id", 4}, {"class", "cup"}, {"room", 1}});
  doc["skills"].push_back({{"verb", "touch"}, {"arity", 1}, {"text", "touch <object>"},
                           {"preconditions", nlohmann::json::array()},
                           {"effects", nlohmann::json::array()}});
  auto d = load_domain(doc.dump());
  auto a = parse_action(d.scene, d.skills, "touch cup");
  ASSERT_TRUE(a);
  EXPECT_EQ(a->object_id, EntityId{4});
}

TEST(Replay, StopsAtFirstFailure) {
  auto d = load_domain_file(data_path("fixtures/kitchen_small.json"));
  std::vector<GroundedAction> plan{act(d, "find milk"), act(d, "grab milk"), act(d, "find glass")};
  auto r = replay(d.scene, d.skills, plan);
  EXPECT_EQ(r.executed, 1u);
  ASSERT_TRUE(r.failure);
  EXPECT_EQ(r.failure->type_id, 6);
}

TEST(Serialize, SceneRoundTrip) {
  auto d = load_domain_file(data_path("domains/household.json"));
  SceneGraph s = run(d, {"walk to kitchen", "find milk", "open fridge", "grab milk"});
  auto j = to_json(s);
  SceneGraph back = scene_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(to_json(back).dump(), j.dump());
}

TEST(Serialize, ErrorRoundTrip) {
  auto d = load_domain_file(data_path("fixtures/kitchen_small.json"));
  auto err = check_preconditions(d.scene, d.skills, act(d, "grab glass"));
  ASSERT_TRUE(err);
  auto j = to_json(*err);
  auto back = error_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(to_json(back).dump(), j.dump());
}

TEST(Determinism, SameInputSameOutput) {
  auto d = load_domain_file(data_path("domains/household.json"));
  auto a = run(d, {"walk to bedroom", "find phone", "grab phone"});
  auto b = run(d, {"walk to bedroom", "find phone", "grab phone"});
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
}
