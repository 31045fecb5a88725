#include "cape/planner/prompts.hpp"

#include <fstream>
#include <regex>
#include <sstream>

#include "cape/error.hpp"
#include "cape/world/world.hpp"
#include "json_access.hpp"

namespace cape::planner {

using detail::child;
using nlohmann::json;

namespace {

const std::regex& step_label() {
  static const std::regex re(R"(^Step\s+(\d+):\s?(.*)$)");
  return re;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return detail::parse_document(ss.str(), path.string());
}

template <typename Fn>
auto with_file_context(const std::filesystem::path& path, Fn&& fn) {
  try {
    return fn(read_json_file(path));
  } catch (const ParseError& e) {
    throw ParseError(e.path(), path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string the(std::string_view name) { return "the " + std::string(name); }

std::string capability_phrase(world::Capability c) {
  switch (c) {
    case world::Capability::grabbable: return "grabbed";
    case world::Capability::openable: return "opened";
    case world::Capability::switchable: return "switched on or off";
    case world::Capability::container: return "used as a container";
    case world::Capability::surface: return "used as a surface";
    case world::Capability::sittable: return "sat on";
  }
  return "used that way";
}

// Closest openable-and-closed object enclosing `obj`, if any.
const world::ObjectInstance* closed_enclosure(const world::SceneGraph& scene,
                                              const world::ObjectInstance& obj) {
  const world::ObjectInstance* cur = &obj;
  for (std::size_t guard = 0; guard <= scene.objects.size(); ++guard) {
    auto parent_id = cur->container ? cur->container : cur->support;
    if (!parent_id) return nullptr;
    cur = scene.find_object(*parent_id);
    if (cur == nullptr) return nullptr;
    if (cur->has(world::Capability::openable) && !cur->attribute("open")) return cur;
  }
  return nullptr;
}

}  // namespace

std::vector<Demonstration> load_demonstrations(const json& doc) {
  if (!doc.is_array()) throw ParseError("", "expected an array of demonstrations");
  if (doc.empty()) throw ValidationError("demonstration set is empty");
  std::vector<Demonstration> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string p = child("", i);
    Demonstration d;
    d.task = detail::get<std::string>(doc[i], "task", p);
    const json& steps = detail::require_array(doc[i], "steps", p);
    if (steps.empty()) throw ValidationError(p + ": demonstration '" + d.task + "' has no steps");
    for (std::size_t j = 0; j < steps.size(); ++j) {
      const std::string sp = child(child(p, "steps"), j);
      auto text = detail::as<std::string>(steps[j], sp);
      std::smatch m;
      if (std::regex_match(text, m, step_label())) {
        if (std::stoul(m[1].str()) != j + 1) {
          throw ParseError(sp, "expected label 'Step " + std::to_string(j + 1) + ":'");
        }
        text = m[2].str();
      }
      if (text.empty()) throw ParseError(sp, "empty step");
      d.steps.push_back(std::move(text));
    }
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<Demonstration> load_demonstrations_file(const std::filesystem::path& path) {
  return with_file_context(path, [](const json& doc) { return load_demonstrations(doc); });
}

std::vector<CorrectionExample> load_correction_examples(const json& doc) {
  if (!doc.is_array()) throw ParseError("", "expected an array of correction examples");
  std::vector<CorrectionExample> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string p = child("", i);
    out.push_back(CorrectionExample{detail::get<std::string>(doc[i], "task", p),
                                    detail::get<std::string>(doc[i], "failed_step", p),
                                    detail::get<std::string>(doc[i], "error", p),
                                    detail::get<std::string>(doc[i], "corrective_action", p)});
  }
  return out;
}

std::vector<CorrectionExample> load_correction_examples_file(const std::filesystem::path& path) {
  return with_file_context(path, [](const json& doc) { return load_correction_examples(doc); });
}

std::string_view prompt_style_name(PromptStyle s) {
  switch (s) {
    case PromptStyle::success_only: return "success_only";
    case PromptStyle::implicit_cause: return "implicit";
    case PromptStyle::explicit_cause: return "explicit";
  }
  return "explicit";
}

std::optional<PromptStyle> parse_prompt_style(std::string_view s) {
  if (s == "success_only") return PromptStyle::success_only;
  if (s == "implicit") return PromptStyle::implicit_cause;
  if (s == "explicit") return PromptStyle::explicit_cause;
  return std::nullopt;
}

const Demonstration& select_demonstration(std::string_view query_task,
                                          std::span<const Demonstration> demos,
                                          embed::EmbeddingProvider& embedder) {
  if (demos.empty()) throw InputError("demonstration set is empty");
  std::vector<std::string> names;
  for (const auto& d : demos) names.push_back(d.task);
  return demos[embed::rank_by_similarity(embedder, query_task, names, 1).front().index];
}

std::vector<CorrectionExample> select_correction_examples(
    std::string_view failed_step, std::span<const CorrectionExample> examples,
    embed::EmbeddingProvider& embedder) {
  if (examples.size() < 3) {
    throw ConfigError("few-shot correction needs at least 3 examples, got " +
                      std::to_string(examples.size()));
  }
  std::vector<std::string> keys;
  for (const auto& e : examples) keys.push_back(e.failed_step);
  std::vector<CorrectionExample> out;
  for (const auto& r : embed::rank_by_similarity(embedder, failed_step, keys, 3)) {
    out.push_back(examples[r.index]);
  }
  return out;
}

std::string render_task_block(std::string_view task, std::span<const std::string> steps) {
  std::string out = "Task: " + std::string(task) + "\n";
  for (std::size_t i = 0; i < steps.size(); ++i) {
    out += "Step " + std::to_string(i + 1) + ": " + steps[i] + "\n";
  }
  return out;
}

std::string build_step_prompt(const Demonstration& example, std::string_view query_task,
                              std::span<const std::string> executed_steps) {
  return render_task_block(example.task, example.steps) + "\n" +
         render_task_block(query_task, executed_steps) + "Step " +
         std::to_string(executed_steps.size() + 1) + ":";
}

std::vector<Demonstration> parse_prompt(std::string_view prompt) {
  std::vector<Demonstration> out;
  std::istringstream in{std::string(prompt)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("Task: ", 0) == 0) {
      out.push_back(Demonstration{line.substr(6), {}});
      continue;
    }
    std::smatch m;
    if (!out.empty() && std::regex_match(line, m, step_label()) && !m[2].str().empty()) {
      out.back().steps.push_back(m[2].str());
    }
  }
  return out;
}

std::string explain_error(const world::PreconditionError& error, const world::SceneGraph& scene) {
  using world::PredicateKind;
  const auto& p = error.violated;
  const std::string obj = error.action.object_name;
  switch (p.kind) {
    case PredicateKind::attribute_is:
      return the(obj) + " is not " + world::state_word(p.attribute, p.value);
    case PredicateKind::facing:
      return "I am not facing " + the(obj);
    case PredicateKind::same_room: {
      const auto* room = scene.find_room(scene.agent.room);
      return the(obj) + " is not in " +
             (room ? the(world::display_name(room->name)) : std::string("this room"));
    }
    case PredicateKind::holding:
      return p.on_agent ? std::string("I am not holding anything") : "I am not holding " + the(obj);
    case PredicateKind::not_enclosed: {
      const world::ObjectInstance* target =
          error.action.object_id ? scene.find_object(*error.action.object_id) : nullptr;
      const auto* box = target ? closed_enclosure(scene, *target) : nullptr;
      return box ? the(obj) + " is inside the closed " + world::display_name(box->class_name)
                 : the(obj) + " is inside something closed";
    }
    case PredicateKind::has_capability:
      if (!p.capability) return "I do not know how to " + error.action.verb;
      return the(obj) + " cannot be " + capability_phrase(*p.capability);
    case PredicateKind::free_hand:
      return "I do not have a free hand";
    case PredicateKind::close_to:
      return "I am not close to " + the(obj);
    case PredicateKind::posture_is:
      return "I am not " + std::string(world::posture_name(p.posture));
  }
  return "a precondition is not satisfied";
}

std::string feedback_line(PromptStyle style, const world::PreconditionError& error,
                          const world::SceneGraph& scene, bool raw_error_message) {
  switch (style) {
    case PromptStyle::success_only:
      return "Task Failed";
    case PromptStyle::implicit_cause:
      return "I cannot " + error.action.rendered;
    case PromptStyle::explicit_cause:
      return "I cannot " + error.action.rendered + " because " +
             (raw_error_message ? error.message : explain_error(error, scene));
  }
  return "Task Failed";
}

std::string build_corrective_prompt(std::string_view task,
                                    std::span<const std::string> executed_steps,
                                    std::string_view feedback,
                                    std::span<const CorrectionExample> examples) {
  std::string out;
  for (const auto& e : examples) {
    out += "Task: " + e.task + "\nError: " + e.error + ". " + std::string(kCorrectionCue) +
           "\nStep: " + e.corrective_action + "\n\n";
  }
  out += render_task_block(task, executed_steps);
  out += "Error: " + std::string(feedback) + ". " + std::string(kCorrectionCue) + "\nStep " +
         std::to_string(executed_steps.size() + 1) + ":";
  return out;
}

}  // namespace cape::planner
