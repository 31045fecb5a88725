#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cape/error.hpp"
#include "cape/harness/harness.hpp"
#include "cape/metrics/metrics.hpp"
#include "cape/planner/trace.hpp"
#include "cape/world/world.hpp"

namespace fs = std::filesystem;
using namespace cape;

namespace {

// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
constexpr int kRuntimeFailure = 1;
constexpr int kUsage = 2;

fs::path data_dir() {
  if (const char* env = std::getenv("CAPE_DATA")) return env;
#ifdef CAPE_DATA_DIR
  return CAPE_DATA_DIR;
#else
  return "data";
#endif
}

// Relative to the working directory first, then to the bundled data directory.
fs::path locate(const std::string& p) {
  const fs::path path(p);
  if (path.is_absolute() || fs::exists(path)) return path;
  const auto bundled = data_dir() / path;
  return fs::exists(bundled) ? bundled : path;
}

harness::ExperimentConfig base_config(const std::string& config_path) {
  if (config_path.empty()) return harness::default_config(data_dir());
  return harness::load_config(locate(config_path));
}

int cmd_plan(const std::string& config_path, const std::string& task, const std::string& method,
             const std::string& script, std::optional<std::uint64_t> seed, const std::string& out) {
  const auto* spec = harness::find_method(method);
  if (!spec) {
    std::cerr << "cape: unknown method '" << method << "' (known: " << harness::method_list() << ")\n";
    return kUsage;
  }
  auto cfg = base_config(config_path);
  std::optional<fs::path> gt;
  for (const auto& t : cfg.tasks) {
    if (t.name == task) gt = t.ground_truth;
  }
  cfg.tasks = {harness::TaskSpec{task, gt}};
  cfg.methods = {method};
  if (!script.empty()) {
    cfg.backend.kind = "scripted";
    cfg.backend.script = locate(script);
  }
  if (seed) cfg.seed = *seed;
  if (!out.empty()) cfg.output = out;
  if (cfg.backend.kind == "scripted" && cfg.backend.script.empty()) {
    throw ConfigError("no backend configured: pass --script or a config with a backend section");
  }

  const harness::Experiment exp(cfg);
  const auto rec = exp.run_episode(task, *spec);
  std::cout << planner::render_plan_text(rec.trace);

  const auto dir = cfg.output / method;
  fs::create_directories(dir);
  const auto file = dir / (harness::slug(task) + ".json");
  std::ofstream(file, std::ios::binary) << planner::to_json(rec.trace).dump(2) << '\n';
  std::cerr << "wrote " << file.string() << '\n';
  return rec.trace.termination == planner::Termination::backend_failure ? kRuntimeFailure : 0;
}

int cmd_batch(const std::string& config_path, std::optional<std::uint64_t> seed,
              const std::string& out, std::optional<int> jobs) {
  auto cfg = harness::load_config(locate(config_path));
  if (seed) cfg.seed = *seed;
  if (!out.empty()) cfg.output = out;
  if (jobs) cfg.jobs = *jobs;
  const harness::Experiment exp(cfg);
  const auto result = harness::run_batch(exp, cfg.output, cfg.jobs);
  std::cout << metrics::render_markdown(result.rows);
  std::size_t failures = 0;
  for (const auto& r : result.records) {
    if (r.trace.termination == planner::Termination::backend_failure) ++failures;
  }
  std::cerr << result.records.size() << " episodes (" << failures << " backend failures) written to "
            << cfg.output.string() << '\n';
  return 0;
}

int cmd_eval(const std::string& results, const std::string& config_path, const std::string& domain_path,
             const std::string& gt_dir, const std::string& annotations, const std::string& out) {
  fs::path domain_file = data_dir() / "domains" / "household.json";
  std::map<std::string, metrics::GroundTruthProgram> gt;
  std::optional<metrics::AnnotationMatrix> notes;
  std::optional<harness::ExperimentConfig> cfg;
  if (!config_path.empty()) {
    cfg = harness::load_config(locate(config_path));
    domain_file = cfg->domain;
  }
  if (!domain_path.empty()) domain_file = locate(domain_path);
  const auto domain = world::load_domain_file(domain_file);
  if (!gt_dir.empty()) {
    gt = metrics::load_ground_truth_dir(locate(gt_dir), domain);
  } else if (cfg) {
    for (const auto& t : cfg->tasks) {
      if (t.ground_truth) gt.emplace(t.name, metrics::load_ground_truth_file(*t.ground_truth, domain));
    }
  }
  if (!annotations.empty()) {
    notes = metrics::load_annotations_file(locate(annotations));
  } else if (cfg && cfg->annotations) {
    notes = metrics::load_annotations_file(*cfg->annotations);
  }
  const auto records = harness::load_results(locate(results));
  const auto rows = harness::evaluate_results(records, domain, gt, notes ? &*notes : nullptr);
  std::cout << metrics::render_markdown(rows);
  if (!out.empty()) harness::write_report(out, rows);
  return 0;
}

int cmd_validate(const std::vector<std::string>& files) {
  int status = 0;
  for (const auto& f : files) {
    try {
      const auto d = world::load_domain_file(locate(f));
      const auto rep = world::enumerate_repertoire(d.scene, d.skills);
      std::cout << f << ": ok (" << d.skills.size() << " skills, " << d.scene.rooms.size()
                << " rooms, " << d.scene.objects.size() << " objects, " << rep.size()
                << " admissible actions)\n";
    } catch (const Error& e) {
      std::cout << f << ": invalid: " << e.what() << '\n';
      status = kUsage;
    }
  }
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-loop LLM task planning with precondition feedback"};
  app.require_subcommand(1);

  std::string config, task, method = "cape-explicit", script, out, results, domain, gt_dir, annotations;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::vector<std::string> domain_files;

  auto* plan = app.add_subcommand("plan", "Plan one task and print the numbered plan");
  plan->add_option("--config", config, "Experiment config (JSON)");
  plan->add_option("--task", task, "Task name")->required();
  plan->add_option("--method", method, "Method name")->capture_default_str();
  plan->add_option("--script", script, "Scripted backend file; overrides the config backend");
  plan->add_option("--seed", seed, "Global seed");
  plan->add_option("--out", out, "Output directory");

  auto* batch = app.add_subcommand("batch", "Run every task x method pair");
  batch->add_option("--config", config, "Experiment config (JSON)")->required();
  batch->add_option("--seed", seed, "Global seed");
  batch->add_option("--out", out, "Output directory");
  batch->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

  auto* eval = app.add_subcommand("eval", "Recompute metrics from a results file");
  eval->add_option("--results", results, "results.jsonl")->required();
  eval->add_option("--config", config, "Experiment config supplying domain and ground truth");
  eval->add_option("--domain", domain, "Domain file");
  eval->add_option("--ground-truth", gt_dir, "Directory of ground-truth programs");
  eval->add_option("--annotations", annotations, "Annotation CSV");
  eval->add_option("--out", out, "Write report.csv and report.md here");

  auto* domains = app.add_subcommand("domains", "Domain file utilities");
  domains->require_subcommand(1);
  auto* validate = domains->add_subcommand("validate", "Load and check domain files");
  validate->add_option("files", domain_files, "Domain files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*plan) return cmd_plan(config, task, method, script, seed, out);
    if (*batch) return cmd_batch(config, seed, out, jobs);
    if (*eval) return cmd_eval(results, config, domain, gt_dir, annotations, out);
    if (*validate) return cmd_validate(domain_files);
  } catch (const ConfigError& e) {
    std::cerr << "cape: " << e.what() << '\n';
    return kUsage;
  } catch (const ParseError& e) {
    std::cerr << "cape: " << e.what() << '\n';
    return kUsage;
  } catch (const ValidationError& e) {
    std::cerr << "cape: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "cape: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kUsage;
}
