#include "cape/planner/planner.hpp"

#include <algorithm>
#include <memory>

#include "cape/error.hpp"

namespace cape::planner {

namespace {

struct BackendFailure {
  std::string what;
};

class Episode {
 public:
  Episode(const std::string& task, const PlanningContext& ctx, const PlannerConfig& cfg,
          const grounding::Grounder& grounder)
      : ctx_(ctx), cfg_(cfg), grounder_(grounder), counter_(ctx.llm), scene_(ctx.domain.scene) {
    trace_.task = task;
    trace_.seed = cfg.seed;
    demo_ = &select_demonstration(task, ctx.demonstrations, ctx.embedder);
  }

  PlanTrace run() {
    try {
      loop();
    } catch (const BackendFailure& f) {
      trace_.termination = Termination::backend_failure;
      trace_.detail = f.what;
    }
    trace_.completion_calls = counter_.completion_calls();
    if (cfg_.strategy == Strategy::open_loop) {
      scene_ = world::replay(ctx_.domain.scene, ctx_.domain.skills, trace_.actions()).scene;
    }
    trace_.final_scene = scene_;
    return std::move(trace_);
  }

 private:
  void loop() {
    for (;;) {
      if (trace_.steps.size() >= static_cast<std::size_t>(cfg_.max_steps)) {
        trace_.termination = Termination::max_steps;
        return;
      }
      auto samples = sample(build_step_prompt(*demo_, trace_.task, texts_));
      if (all_blank(samples)) {
        trace_.termination =
            trace_.steps.empty() ? Termination::empty_program : Termination::completed;
        if (trace_.steps.empty()) trace_.detail = "empty program";
        return;
      }
      const auto outcome = grounder_.ground(samples, cfg_.grounding);
      if (outcome.below_threshold) {
        trace_.termination = Termination::threshold;
        return;
      }
      bool ok = false;
      switch (cfg_.strategy) {
        case Strategy::open_loop:
          append(outcome.best);
          ok = true;
          break;
        case Strategy::resample:
          ok = resample(samples);
          break;
        case Strategy::cape:
          ok = correct(outcome.best);
          break;
      }
      if (!ok) {
        trace_.termination = Termination::exhausted_corrections;
        return;
      }
    }
  }

  std::vector<llm::CompletionSample> sample(const std::string& prompt) {
    llm::CompletionRequest req = cfg_.sampling;
    req.prompt = prompt;
    std::vector<llm::CompletionSample> samples;
    try {
      samples = counter_.complete(req);
    } catch (const TransportError& e) {
      throw BackendFailure{e.what()};
    } catch (const UnmatchedPromptError& e) {
      throw BackendFailure{e.what()};
    }
    for (auto& s : samples) s.text = llm::clean_step_text(s.text);
    return samples;
  }

  static bool all_blank(const std::vector<llm::CompletionSample>& samples) {
    return std::all_of(samples.begin(), samples.end(),
                       [](const auto& s) { return s.text.empty(); });
  }

  void append(const grounding::ScoredCandidate& c) {
    if (cfg_.strategy != Strategy::open_loop) {
      scene_ = world::apply_action(scene_, ctx_.domain.skills, c.admissible);
    }
    trace_.steps.push_back(PlanStep{c.admissible, c});
    texts_.push_back(c.admissible.rendered);
  }

  bool budget_left() const {
    return trace_.corrections.size() < static_cast<std::size_t>(cfg_.max_total_corrections);
  }

  void mark_resolved(std::size_t from, bool resolved) {
    for (std::size_t i = from; i < trace_.corrections.size(); ++i) {
      trace_.corrections[i].resolved = resolved;
    }
  }

  // Walks the ranked candidates best-first; every rejected one is a correction.
  bool resample(const std::vector<llm::CompletionSample>& samples) {
    const auto ranked = grounder_.rank(samples, cfg_.grounding);
    const std::size_t first = trace_.corrections.size();
    const std::size_t depth = std::min(ranked.size(), static_cast<std::size_t>(cfg_.k));
    for (std::size_t j = 0; j < depth; ++j) {
      if (j > 0) ++trace_.scoring_calls;
      const auto& cand = ranked[j];
      auto err = world::check_preconditions(scene_, ctx_.domain.skills, cand.admissible);
      if (!err) {
        append(cand);
        mark_resolved(first, true);
        return true;
      }
      if (!budget_left()) break;
      trace_.corrections.push_back(CorrectionEvent{trace_.steps.size() + 1, *err, "", "", false});
    }
    return false;
  }

  bool correct(const grounding::ScoredCandidate& proposed) {
    auto err = world::check_preconditions(scene_, ctx_.domain.skills, proposed.admissible);
    if (!err) {
      append(proposed);
      return true;
    }
    const std::size_t first = trace_.corrections.size();
    for (int attempt = 0; attempt < cfg_.max_corrections_per_step && budget_left(); ++attempt) {
      std::vector<CorrectionExample> examples;
      if (cfg_.few_shot) {
        examples = select_correction_examples(err->action.rendered, ctx_.correction_examples,
                                              ctx_.embedder);
      }
      const auto feedback = feedback_line(cfg_.style, *err, scene_, cfg_.raw_error_messages);
      const auto prompt = build_corrective_prompt(trace_.task, texts_, feedback, examples);
      trace_.corrections.push_back(
          CorrectionEvent{trace_.steps.size() + 1, *err, prompt, feedback, false});

      auto samples = sample(prompt);
      if (all_blank(samples)) continue;
      const auto outcome = grounder_.ground(samples, cfg_.grounding);
      if (outcome.below_threshold) continue;
      auto next = world::check_preconditions(scene_, ctx_.domain.skills, outcome.best.admissible);
      if (!next) {
        append(outcome.best);
        mark_resolved(first, true);
        return true;
      }
      err = std::move(next);
    }
    return false;
  }

  const PlanningContext& ctx_;
  const PlannerConfig& cfg_;
  const grounding::Grounder& grounder_;
  llm::CountingBackend counter_;
  world::SceneGraph scene_;
  const Demonstration* demo_ = nullptr;
  std::vector<std::string> texts_;
  PlanTrace trace_;
};

}  // namespace

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::open_loop: return "open_loop";
    case Strategy::resample: return "resample";
    case Strategy::cape: return "cape";
  }
  return "cape";
}

void PlannerConfig::validate() const {
  if (k < 1) throw ConfigError("k must be positive");
  if (max_steps < 1) throw ConfigError("max_steps must be positive");
  if (max_corrections_per_step < 1) throw ConfigError("max_corrections_per_step must be positive");
  if (max_total_corrections < 1) throw ConfigError("max_total_corrections must be positive");
  if (grounding.beta < 0) throw ConfigError("beta must be non-negative");
  if (sampling.n_samples < 1) throw ConfigError("n_samples must be positive");
}

PlanTrace plan(const std::string& task, const PlanningContext& ctx, const PlannerConfig& config) {
  config.validate();
  if (config.strategy == Strategy::cape && config.few_shot && ctx.correction_examples.size() < 3) {
    throw ConfigError("few-shot correction needs at least 3 examples");
  }
  std::unique_ptr<grounding::Grounder> owned;
  const grounding::Grounder* grounder = ctx.grounder;
  if (grounder == nullptr) {
    owned = std::make_unique<grounding::Grounder>(
        world::enumerate_repertoire(ctx.domain.scene, ctx.domain.skills), ctx.embedder);
    grounder = owned.get();
  }
  return Episode(task, ctx, config, *grounder).run();
}

}  // namespace cape::planner
