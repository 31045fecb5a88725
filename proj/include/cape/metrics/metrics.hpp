#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cape/planner/trace.hpp"
#include "cape/world/world.hpp"
#include "json.hpp"

namespace cape::metrics {

struct GroundTruthProgram {
  std::string task;
  std::vector<std::string> steps;
  std::vector<world::GroundedAction> actions;
  world::SceneGraph final_scene;
};

// {"task", "steps": [...]}. Every step is bound and executed from the domain's
// initial scene; a step that does not parse or fails throws ValidationError
// naming it.
GroundTruthProgram load_ground_truth(const nlohmann::json& doc, const world::Domain& domain);
GroundTruthProgram load_ground_truth_file(const std::filesystem::path& path,
                                          const world::Domain& domain);
// Every *.json in `dir`, keyed by task name.
std::map<std::string, GroundTruthProgram> load_ground_truth_dir(const std::filesystem::path& dir,
                                                                const world::Domain& domain);

// 1 iff the whole plan replays without a precondition failure; empty plans are 0.
int executability(std::span<const world::GroundedAction> actions, const world::SceneGraph& initial,
                  std::span<const world::SkillTemplate> skills);

// Percentage of steps that execute when failing steps are skipped (scene left
// unchanged); empty plans are 0.
double affordability(std::span<const world::GroundedAction> actions,
                     const world::SceneGraph& initial,
                     std::span<const world::SkillTemplate> skills);

// Lowercased with runs of whitespace collapsed and the ends trimmed.
std::string normalize_step(std::string_view step);

// Two-row dynamic program over any equality-comparable tokens.
template <typename T>
std::size_t lcs_table(std::span<const T> a, std::span<const T> b) {
  constexpr std::size_t kInline = 32;
  std::size_t small[2][kInline + 1];
  std::vector<std::size_t> heap;
  std::size_t* prev = small[0];
  std::size_t* cur = small[1];
  if (b.size() > kInline) {
    heap.assign(2 * (b.size() + 1), 0);
    prev = heap.data();
    cur = heap.data() + b.size() + 1;
  } else {
    std::fill_n(prev, b.size() + 1, 0);
    cur[0] = 0;
  }
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      // prev[j-1] + 1 never loses to the other two on a match, so max covers both cases.
      const std::size_t diag = prev[j - 1] + static_cast<std::size_t>(a[i - 1] == b[j - 1]);
      cur[j] = std::max(diag, std::max(prev[j], cur[j - 1]));
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// lcs_table over normalized steps.
std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

// Step-level longest common subsequence over normalized steps divided by the
// longer length; 1 when both are empty.
double lcs(std::span<const std::string> generated, std::span<const std::string> ground_truth);

// Attribute slots compared per object: placement plus these booleans.
inline constexpr std::string_view kStateAttributes[] = {"open", "on", "clean", "grabbed"};
inline constexpr std::size_t kSlotsPerObject = 1 + std::size(kStateAttributes);

// Percentage of matching slots over the union of object ids. Objects present
// in one scene only count as all-mismatch.
double graph_similarity(const world::SceneGraph& generated, const world::SceneGraph& ground_truth);

struct AnnotationMatrix {
  std::vector<std::string> plan_ids;
  std::vector<std::vector<int>> ratings;  // one row per plan, binary labels
};

// Header "plan_id,rater_1,...,rater_n"; cells 0 or 1. Throws ParseError.
AnnotationMatrix parse_annotations_csv(std::string_view text);
AnnotationMatrix load_annotations_file(const std::filesystem::path& path);

// Rows whose plan id satisfies `keep`.
template <typename Pred>
AnnotationMatrix filter_annotations(const AnnotationMatrix& m, Pred keep) {
  AnnotationMatrix out;
  for (std::size_t i = 0; i < m.plan_ids.size(); ++i) {
    if (keep(m.plan_ids[i])) {
      out.plan_ids.push_back(m.plan_ids[i]);
      out.ratings.push_back(m.ratings[i]);
    }
  }
  return out;
}

// Fleiss' kappa for binary labels. Throws InputError for fewer than two items
// or raters, uneven rater counts, or labels other than 0/1.
double fleiss_kappa(const AnnotationMatrix& matrix);

// Mean label times 100.
double percent_correct(const AnnotationMatrix& matrix);

struct EpisodeMetrics {
  int executable = 0;
  double affordability = 0.0;
  std::optional<double> lcs;       // absent without ground truth
  std::optional<double> pct_gs;    // absent without ground truth
  std::size_t steps = 0;
  std::size_t corrections = 0;

  friend bool operator==(const EpisodeMetrics&, const EpisodeMetrics&) = default;
};

EpisodeMetrics evaluate(const planner::PlanTrace& trace, const world::Domain& domain,
                        const GroundTruthProgram* ground_truth);

nlohmann::ordered_json to_json(const EpisodeMetrics& m);
EpisodeMetrics metrics_from_json(const nlohmann::json& doc, const std::string& path = "");

struct ReportRow {
  std::string method;
  std::optional<double> pct_correct;
  double pct_executable = 0.0;
  double pct_affordable = 0.0;
  std::optional<double> pct_gs;
  std::optional<double> lcs;
  std::optional<double> fleiss_kappa;
  double mean_steps = 0.0;
  double mean_corrections = 0.0;
  std::size_t episodes = 0;
};

// Means over the episodes; LCS and %GS over the episodes that have them.
// %Correct and kappa come from `annotations` when given (kappa needs two or
// more items). Throws InputError for an empty episode list.
ReportRow aggregate(std::string method, std::span<const EpisodeMetrics> episodes,
                    const AnnotationMatrix* annotations = nullptr);

// Columns: Method, %Correct, %Exec, %Aff, %GS, LCS, Kappa, Steps, Corrections,
// Episodes. Absent values render as N/A.
std::string render_csv(std::span<const ReportRow> rows);
std::string render_markdown(std::span<const ReportRow> rows);

}  // namespace cape::metrics
