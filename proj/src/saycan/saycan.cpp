#include "cape/saycan/saycan.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "cape/error.hpp"

namespace cape::saycan {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    c = c == '_' ? ' ' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// End offset of the last whole-word occurrence of `name` in `text`, or npos.
std::size_t last_match_end(const std::string& text, const std::string& name) {
  if (name.empty()) return std::string::npos;
  std::size_t pos = text.rfind(name);
  while (pos != std::string::npos) {
    const std::size_t end = pos + name.size();
    const bool left = pos == 0 || !word_char(text[pos - 1]);
    const bool right = end == text.size() || !word_char(text[end]);
    if (left && right) return end;
    if (pos == 0) break;
    pos = text.rfind(name, pos - 1);
  }
  return std::string::npos;
}

struct BackendFailure {
  std::string what;
};

class Episode {
 public:
  Episode(const std::string& task, const SayCanContext& ctx, const SayCanConfig& cfg,
          AffordanceModel& model)
      : ctx_(ctx),
        cfg_(cfg),
        model_(model),
        counter_(ctx.llm),
        scene_(ctx.domain.scene),
        repertoire_(world::enumerate_repertoire(ctx.domain.scene, ctx.domain.skills)) {
    trace_.task = task;
    trace_.method = std::string("saycan-") + std::string(affordance_mode_name(model.mode()));
    trace_.seed = cfg.seed;
    demo_ = &planner::select_demonstration(task, ctx.demonstrations, ctx.embedder);
    done_.verb = cfg.done_skill;
    done_.rendered = cfg.done_skill;
  }

  planner::PlanTrace run() {
    try {
      loop();
    } catch (const BackendFailure& f) {
      trace_.termination = planner::Termination::backend_failure;
      trace_.detail = f.what;
    }
    trace_.completion_calls = counter_.completion_calls();
    trace_.scoring_calls = counter_.scoring_calls();
    trace_.final_scene = scene_;
    return std::move(trace_);
  }

 private:
  void loop() {
    for (;;) {
      if (trace_.steps.size() >= static_cast<std::size_t>(cfg_.max_steps)) {
        trace_.termination = planner::Termination::max_steps;
        return;
      }
      const auto prompt = planner::build_step_prompt(*demo_, trace_.task, texts_);
      std::string prototype;
      std::vector<world::GroundedAction> subset;
      if (cfg_.use_subsampling && repertoire_.size() > cfg_.limits.passthrough) {
        prototype = generate_prototype(prompt);
        const auto anchor = prototype.empty() ? trace_.task : prototype;
        subset = grounding::subsample_repertoire(anchor, target_object(anchor, repertoire_),
                                                 repertoire_, ctx_.embedder, cfg_.limits);
      } else {
        subset = repertoire_;
      }

      std::vector<grounding::ScoredCandidate> scored;
      scored.reserve(subset.size() + 1);
      for (const auto& action : subset) {
        const double lp = score(prompt, action.rendered);
        const int afford = model_.query(scene_, ctx_.domain.skills, action);
        scored.push_back(candidate(prototype, action, lp, afford));
      }
      scored.push_back(candidate(prototype, done_, score(prompt, done_.rendered), 1));

      const auto best = *std::min_element(scored.begin(), scored.end(), grounding::ranks_before);
      if (best.admissible.verb == cfg_.done_skill && !best.admissible.object_id) {
        trace_.termination = planner::Termination::completed;
        return;
      }
      if (best.score <= 0.0) {
        trace_.termination = planner::Termination::exhausted_corrections;
        trace_.detail = "no afforded action";
        return;
      }
      // A wrongly admitted action is still issued; the world refuses it.
      if (!world::check_preconditions(scene_, ctx_.domain.skills, best.admissible)) {
        scene_ = world::apply_action(scene_, ctx_.domain.skills, best.admissible);
      }
      trace_.steps.push_back(planner::PlanStep{best.admissible, best});
      texts_.push_back(best.admissible.rendered);
    }
  }

  grounding::ScoredCandidate candidate(const std::string& prototype,
                                       const world::GroundedAction& action, double lp,
                                       int afford) const {
    grounding::ScoredCandidate c;
    c.free_text = prototype;
    c.admissible = action;
    c.mean_logprob = lp;
    c.score = std::exp(lp) * afford;
    c.scorer = grounding::Scorer::affordance;
    return c;
  }

  double score(const std::string& prompt, const std::string& rendered) {
    try {
      return counter_.score_continuation(prompt, " " + rendered);
    } catch (const TransportError& e) {
      throw BackendFailure{e.what()};
    } catch (const UnmatchedPromptError& e) {
      throw BackendFailure{e.what()};
    }
  }

  std::string generate_prototype(const std::string& prompt) {
    llm::CompletionRequest req;
    req.prompt = prompt;
    req.n_samples = 1;
    req.temperature = 0.0;
    req.presence_penalty = 0.0;
    try {
      const auto samples = counter_.complete(req);
      return samples.empty() ? std::string() : llm::clean_step_text(samples.front().text);
    } catch (const TransportError& e) {
      throw BackendFailure{e.what()};
    } catch (const UnmatchedPromptError& e) {
      throw BackendFailure{e.what()};
    }
  }

  const SayCanContext& ctx_;
  const SayCanConfig& cfg_;
  AffordanceModel& model_;
  llm::CountingBackend counter_;
  world::SceneGraph scene_;
  std::vector<world::GroundedAction> repertoire_;
  world::GroundedAction done_;
  const planner::Demonstration* demo_ = nullptr;
  std::vector<std::string> texts_;
  planner::PlanTrace trace_;
};

}  // namespace

std::string_view affordance_mode_name(AffordanceMode m) {
  return m == AffordanceMode::noisy ? "noisy" : "perfect";
}

AffordanceModel::AffordanceModel(AffordanceMode mode, std::uint64_t seed, double flip_probability)
    : mode_(mode), flip_probability_(flip_probability), rng_(seed) {
  if (!(flip_probability >= 0.0 && flip_probability <= 1.0)) {
    throw ConfigError("flip probability must lie in [0, 1]");
  }
}

bool AffordanceModel::draw_flip() {
  // 53 high bits as a uniform double in [0, 1); identical on every platform.
  const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  return u < flip_probability_;
}

int AffordanceModel::query(const world::SceneGraph& scene,
                           std::span<const world::SkillTemplate> skills,
                           const world::GroundedAction& action) {
  ++queries_;
  int verdict = world::check_preconditions(scene, skills, action) ? 0 : 1;
  if (mode_ == AffordanceMode::noisy && draw_flip()) {
    ++flips_;
    verdict = 1 - verdict;
  }
  return verdict;
}

void SayCanConfig::validate() const {
  if (max_steps < 1) throw ConfigError("max_steps must be positive");
  if (done_skill.empty()) throw ConfigError("done_skill must not be empty");
  if (limits.passthrough < 1) throw ConfigError("subsample passthrough must be positive");
}

std::string target_object(std::string_view prototype,
                          std::span<const world::GroundedAction> repertoire) {
  const std::string text = lower(prototype);
  std::set<std::string> names;
  for (const auto& a : repertoire) {
    if (!a.object_name.empty()) names.insert(lower(a.object_name));
  }
  std::string best;
  std::size_t best_end = 0;
  bool found = false;
  for (const auto& name : names) {
    const auto end = last_match_end(text, name);
    if (end == std::string::npos) continue;
    if (!found || end > best_end || (end == best_end && name.size() > best.size())) {
      best = name;
      best_end = end;
      found = true;
    }
  }
  return best;
}

planner::PlanTrace plan_saycan(const std::string& task, const SayCanContext& ctx,
                               const SayCanConfig& config, AffordanceModel& model) {
  config.validate();
  return Episode(task, ctx, config, model).run();
}

}  // namespace cape::saycan
