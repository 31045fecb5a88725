#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cape/embed/embedding.hpp"
#include "cape/grounding/grounding.hpp"
#include "cape/llm/completion.hpp"
#include "cape/metrics/metrics.hpp"
#include "cape/planner/planner.hpp"
#include "cape/saycan/saycan.hpp"
#include "json.hpp"

namespace cape::harness {

enum class Family { planner, saycan };

// One evaluated approach: a planner strategy with its prompt style and
// grounding scorer, or SayCan with an affordance model.
struct MethodSpec {
  std::string_view name;
  Family family = Family::planner;
  planner::Strategy strategy = planner::Strategy::cape;
  planner::PromptStyle style = planner::PromptStyle::explicit_cause;
  bool few_shot = false;
  grounding::Scorer scorer = grounding::Scorer::weighted;
  saycan::AffordanceMode affordance = saycan::AffordanceMode::perfect;
};

std::span<const MethodSpec> method_roster();
const MethodSpec* find_method(std::string_view name);
std::string method_list();  // comma-separated names, for messages

struct TaskSpec {
  std::string name;
  std::optional<std::filesystem::path> ground_truth;
};

struct BackendSettings {
  std::string kind = "scripted";  // scripted | remote
  std::filesystem::path script;
  std::string url;    // remote; falls back to CAPE_LLM_URL
  std::string model;
};

struct EmbeddingSettings {
  std::string kind = "trigram";  // trigram | remote
  std::size_t dimension = 256;
  std::string url;    // remote; falls back to CAPE_EMBED_URL
  std::string model;
};

struct ExperimentConfig {
  std::filesystem::path domain;
  std::filesystem::path demonstrations;
  std::filesystem::path correction_examples;
  std::vector<TaskSpec> tasks;
  std::vector<std::string> methods;
  BackendSettings backend;
  EmbeddingSettings embedding;
  planner::PlannerConfig planner;  // strategy, style, few_shot and scorer come from the method
  std::optional<double> threshold_weighted;
  std::optional<double> threshold_geometric;
  saycan::SayCanConfig saycan;
  double flip_probability = saycan::AffordanceModel::kNoisyFlipProbability;
  std::optional<std::filesystem::path> annotations;
  std::filesystem::path output = "out";
  std::uint64_t seed = 0;
  int jobs = 1;

  // Throws ConfigError naming the first unknown method or missing file.
  void validate() const;
};

// Relative paths are resolved against `base_dir`. Throws ParseError for
// schema problems.
ExperimentConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
ExperimentConfig load_config(const std::filesystem::path& path);

// Settings used when no config file is given: the bundled household domain,
// demonstrations and correction examples under `data_dir`.
ExperimentConfig default_config(const std::filesystem::path& data_dir);

// FNV-1a over (seed, task, method), so an episode's seed does not depend on
// scheduling.
std::uint64_t episode_seed(std::uint64_t global_seed, std::string_view task,
                           std::string_view method);

// "get glass of milk" -> "get_glass_of_milk"
std::string slug(std::string_view text);

struct EpisodeRecord {
  std::string task;
  std::string method;
  std::uint64_t seed = 0;
  planner::PlanTrace trace;
  metrics::EpisodeMetrics metrics;
};

nlohmann::ordered_json to_json(const EpisodeRecord& r);
EpisodeRecord record_from_json(const nlohmann::json& doc, const std::string& path = "");
std::vector<EpisodeRecord> load_results(const std::filesystem::path& path);

// Everything an episode needs, loaded once and shared read-only by workers.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig config);
  ~Experiment();

  const ExperimentConfig& config() const noexcept { return config_; }
  const world::Domain& domain() const noexcept { return domain_; }
  const metrics::GroundTruthProgram* ground_truth(const std::string& task) const;

  // Never throws for planning problems: any failure becomes a trace with
  // Termination::backend_failure.
  EpisodeRecord run_episode(const std::string& task, const MethodSpec& method) const;

 private:
  std::unique_ptr<llm::CompletionBackend> make_backend() const;

  ExperimentConfig config_;
  world::Domain domain_;
  std::vector<planner::Demonstration> demos_;
  std::vector<planner::CorrectionExample> corrections_;
  std::map<std::string, metrics::GroundTruthProgram> ground_truth_;
  std::optional<nlohmann::json> script_;
  std::shared_ptr<embed::EmbeddingProvider> embedder_;
  std::unique_ptr<grounding::Grounder> grounder_;
};

// One row per method, in `method_order`; %Correct and kappa use annotation
// rows whose plan_id is "<method>/<task>".
std::vector<metrics::ReportRow> build_report(std::span<const EpisodeRecord> records,
                                             std::span<const std::string> method_order,
                                             const metrics::AnnotationMatrix* annotations);

struct BatchResult {
  std::vector<EpisodeRecord> records;
  std::vector<metrics::ReportRow> rows;
};

// Runs every task x method pair on `jobs` threads. Records are appended to
// <out>/results.jsonl in task-then-method order, each line flushed as soon as
// its predecessors are written; wall times go to timings.jsonl, and
// report.csv / report.md are written at the end.
BatchResult run_batch(const Experiment& experiment, const std::filesystem::path& out_dir, int jobs);

// Recomputes every metric from the stored traces.
std::vector<metrics::ReportRow> evaluate_results(
    std::span<const EpisodeRecord> records, const world::Domain& domain,
    const std::map<std::string, metrics::GroundTruthProgram>& ground_truth,
    const metrics::AnnotationMatrix* annotations, std::vector<EpisodeRecord>* recomputed = nullptr);

void write_report(const std::filesystem::path& out_dir, std::span<const metrics::ReportRow> rows);

}  // namespace cape::harness
