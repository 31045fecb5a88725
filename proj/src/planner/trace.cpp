#include "cape/planner/trace.hpp"

#include <array>

#include "cape/error.hpp"
#include "cape/world/serialize.hpp"
#include "json_access.hpp"

namespace cape::planner {

using detail::child;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr std::array<std::pair<Termination, std::string_view>, 6> kTerminations{{
    {Termination::completed, "completed"},
    {Termination::threshold, "threshold"},
    {Termination::max_steps, "max_steps"},
    {Termination::exhausted_corrections, "exhausted_corrections"},
    {Termination::backend_failure, "backend_failure"},
    {Termination::empty_program, "empty_program"},
}};

}  // namespace

std::string_view termination_name(Termination t) {
  for (const auto& [k, name] : kTerminations) {
    if (k == t) return name;
  }
  return "completed";
}

std::optional<Termination> parse_termination(std::string_view s) {
  for (const auto& [k, name] : kTerminations) {
    if (name == s) return k;
  }
  return std::nullopt;
}

std::optional<int> PlanTrace::error_type() const {
  if (termination == Termination::empty_program) return kEmptyProgramErrorType;
  return std::nullopt;
}

std::vector<std::string> PlanTrace::step_texts() const {
  std::vector<std::string> out;
  for (const auto& s : steps) out.push_back(s.action.rendered);
  return out;
}

std::vector<world::GroundedAction> PlanTrace::actions() const {
  std::vector<world::GroundedAction> out;
  for (const auto& s : steps) out.push_back(s.action);
  return out;
}

ordered_json to_json(const PlanTrace& t) {
  ordered_json steps = ordered_json::array();
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    ordered_json s;
    s["index"] = i + 1;
    s["action"] = world::to_json(t.steps[i].action);
    s["candidate"] = grounding::to_json(t.steps[i].candidate);
    steps.push_back(std::move(s));
  }
  ordered_json corrections = ordered_json::array();
  for (const auto& c : t.corrections) {
    ordered_json e;
    e["step"] = c.step;
    e["error"] = world::to_json(c.error);
    e["prompt"] = c.prompt;
    e["feedback"] = c.feedback;
    e["resolved"] = c.resolved;
    corrections.push_back(std::move(e));
  }
  ordered_json out;
  out["task"] = t.task;
  out["method"] = t.method;
  out["seed"] = t.seed;
  out["steps"] = std::move(steps);
  out["corrections"] = std::move(corrections);
  out["completion_calls"] = t.completion_calls;
  out["scoring_calls"] = t.scoring_calls;
  out["termination"] = std::string(termination_name(t.termination));
  out["error_type"] = t.error_type() ? ordered_json(*t.error_type()) : ordered_json(nullptr);
  out["detail"] = t.detail;
  out["final_scene"] = world::to_json(t.final_scene);
  return out;
}

PlanTrace trace_from_json(const json& doc, const std::string& path) {
  PlanTrace t;
  t.task = detail::get<std::string>(doc, "task", path);
  t.method = detail::get_or<std::string>(doc, "method", path, "");
  t.seed = detail::require(doc, "seed", path).get<std::uint64_t>();
  const json& steps = detail::require_array(doc, "steps", path);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const std::string p = child(child(path, "steps"), i);
    PlanStep s;
    s.action = world::action_from_json(detail::require(steps[i], "action", p), child(p, "action"));
    s.candidate = grounding::candidate_from_json(detail::require(steps[i], "candidate", p),
                                                 child(p, "candidate"));
    t.steps.push_back(std::move(s));
  }
  const json& corrections = detail::require_array(doc, "corrections", path);
  for (std::size_t i = 0; i < corrections.size(); ++i) {
    const std::string p = child(child(path, "corrections"), i);
    CorrectionEvent c;
    c.step = static_cast<std::size_t>(detail::get<long>(corrections[i], "step", p));
    c.error = world::error_from_json(detail::require(corrections[i], "error", p), child(p, "error"));
    c.prompt = detail::get<std::string>(corrections[i], "prompt", p);
    c.feedback = detail::get<std::string>(corrections[i], "feedback", p);
    c.resolved = detail::get<bool>(corrections[i], "resolved", p);
    t.corrections.push_back(std::move(c));
  }
  t.completion_calls = static_cast<std::uint64_t>(detail::get<long>(doc, "completion_calls", path));
  t.scoring_calls = static_cast<std::uint64_t>(detail::get<long>(doc, "scoring_calls", path));
  const auto term = detail::get<std::string>(doc, "termination", path);
  const auto parsed = parse_termination(term);
  if (!parsed) throw ParseError(child(path, "termination"), "unknown termination '" + term + "'");
  t.termination = *parsed;
  t.detail = detail::get_or<std::string>(doc, "detail", path, "");
  t.final_scene = world::scene_from_json(detail::require(doc, "final_scene", path),
                                         child(path, "final_scene"));
  return t;
}

std::string render_plan_text(const PlanTrace& t) {
  std::string out = "Task: " + t.task + "\n";
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    for (const auto& c : t.corrections) {
      if (c.step == i + 1 && !c.feedback.empty()) {
        out += "Error: " + c.feedback + ". A correct step would be to\n";
      }
    }
    out += "Step " + std::to_string(i + 1) + ": " + t.steps[i].action.rendered + "\n";
  }
  for (const auto& c : t.corrections) {
    if (c.step == t.steps.size() + 1 && !c.feedback.empty()) {
      out += "Error: " + c.feedback + ". A correct step would be to\n";
    }
  }
  out += "[" + std::string(termination_name(t.termination)) + "]";
  if (!t.detail.empty()) out += " " + t.detail;
  out += "\n";
  return out;
}

}  // namespace cape::planner
