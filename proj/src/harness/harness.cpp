#include "cape/harness/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "cape/embed/remote.hpp"
#include "cape/error.hpp"
#include "cape/llm/remote.hpp"
#include "cape/llm/scripted.hpp"
#include "cape/net/http.hpp"
#include "json_access.hpp"

namespace cape::harness {

namespace fs = std::filesystem;
using detail::child;
using detail::get;
using detail::get_or;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

using planner::PromptStyle;
using planner::Strategy;
using grounding::Scorer;

constexpr MethodSpec kRoster[] = {
    {"open-loop", Family::planner, Strategy::open_loop, PromptStyle::explicit_cause, false, Scorer::weighted},
    {"resample", Family::planner, Strategy::resample, PromptStyle::explicit_cause, false, Scorer::weighted},
    {"cape-success", Family::planner, Strategy::cape, PromptStyle::success_only, false, Scorer::weighted},
    {"cape-implicit", Family::planner, Strategy::cape, PromptStyle::implicit_cause, false, Scorer::weighted},
    {"cape-explicit", Family::planner, Strategy::cape, PromptStyle::explicit_cause, false, Scorer::weighted},
    {"cape-explicit-sg", Family::planner, Strategy::cape, PromptStyle::explicit_cause, false, Scorer::geometric},
    {"cape-fewshot-explicit", Family::planner, Strategy::cape, PromptStyle::explicit_cause, true, Scorer::weighted},
    {"cape-fewshot-explicit-sg", Family::planner, Strategy::cape, PromptStyle::explicit_cause, true, Scorer::geometric},
    {"saycan-perfect", Family::saycan, Strategy::cape, PromptStyle::explicit_cause, false, Scorer::affordance,
     saycan::AffordanceMode::perfect},
    {"saycan-noisy", Family::saycan, Strategy::cape, PromptStyle::explicit_cause, false, Scorer::affordance,
     saycan::AffordanceMode::noisy},
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw ConfigError(what + " not found: " + p.string());
}

std::string env_or(const std::string& value, const char* name) {
  if (!value.empty()) return value;
  const char* v = std::getenv(name);
  return v ? std::string(v) : std::string();
}

std::uint64_t fnv1a(std::uint64_t h, std::string_view bytes) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

planner::PlanTrace failed_trace(const std::string& task, const std::string& method,
                                std::uint64_t seed, const world::SceneGraph& scene,
                                const std::string& what) {
  planner::PlanTrace t;
  t.task = task;
  t.method = method;
  t.seed = seed;
  t.termination = planner::Termination::backend_failure;
  t.detail = what;
  t.final_scene = scene;
  return t;
}

metrics::AnnotationMatrix annotations_for(const metrics::AnnotationMatrix& all,
                                          const std::string& method) {
  const std::string prefix = method + "/";
  return metrics::filter_annotations(all, [&](const std::string& id) { return id.starts_with(prefix); });
}

}  // namespace

std::span<const MethodSpec> method_roster() { return kRoster; }

const MethodSpec* find_method(std::string_view name) {
  for (const auto& m : kRoster) {
    if (m.name == name) return &m;
  }
  return nullptr;
}

std::string method_list() {
  std::string out;
  for (const auto& m : kRoster) out += (out.empty() ? "" : ", ") + std::string(m.name);
  return out;
}

void ExperimentConfig::validate() const {
  require_file(domain, "domain file");
  require_file(demonstrations, "demonstrations file");
  if (!correction_examples.empty()) require_file(correction_examples, "correction examples file");
  if (tasks.empty()) throw ConfigError("no tasks configured");
  if (methods.empty()) throw ConfigError("no methods configured");
  for (const auto& m : methods) {
    if (!find_method(m)) throw ConfigError("unknown method '" + m + "' (known: " + method_list() + ")");
  }
  for (const auto& t : tasks) {
    if (t.name.empty()) throw ConfigError("task names must not be empty");
    if (t.ground_truth) require_file(*t.ground_truth, "ground truth for '" + t.name + "'");
  }
  if (backend.kind == "scripted") {
    require_file(backend.script, "backend script");
  } else if (backend.kind != "remote") {
    throw ConfigError("backend kind must be 'scripted' or 'remote'");
  }
  if (embedding.kind != "trigram" && embedding.kind != "remote") {
    throw ConfigError("embedding kind must be 'trigram' or 'remote'");
  }
  if (annotations) require_file(*annotations, "annotations file");
  if (jobs < 1) throw ConfigError("jobs must be positive");
  planner.validate();
  saycan.validate();
  if (!(flip_probability >= 0.0 && flip_probability <= 1.0)) {
    throw ConfigError("flip_probability must lie in [0, 1]");
  }
}

ExperimentConfig parse_config(const json& doc, const fs::path& base) {
  if (!doc.is_object()) throw ParseError("", "config must be a JSON object");
  ExperimentConfig c;
  c.domain = resolve(base, get<std::string>(doc, "domain", ""));
  c.demonstrations = resolve(base, get<std::string>(doc, "demonstrations", ""));
  if (auto v = get_or<std::string>(doc, "correction_examples", "", ""); !v.empty()) {
    c.correction_examples = resolve(base, v);
  }

  const json& tasks = detail::require_array(doc, "tasks", "");
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const std::string p = child("/tasks", i);
    TaskSpec t;
    if (tasks[i].is_string()) {
      t.name = tasks[i].get<std::string>();
    } else {
      t.name = get<std::string>(tasks[i], "name", p);
      if (auto gt = get_or<std::string>(tasks[i], "ground_truth", p, ""); !gt.empty()) {
        t.ground_truth = resolve(base, gt);
      }
    }
    c.tasks.push_back(std::move(t));
  }
  const json& methods = detail::require_array(doc, "methods", "");
  for (std::size_t i = 0; i < methods.size(); ++i) {
    c.methods.push_back(detail::as<std::string>(methods[i], child("/methods", i)));
  }

  if (auto it = doc.find("backend"); it != doc.end()) {
    c.backend.kind = get_or<std::string>(*it, "kind", "/backend", "scripted");
    if (auto s = get_or<std::string>(*it, "script", "/backend", ""); !s.empty()) {
      c.backend.script = resolve(base, s);
    }
    c.backend.url = get_or<std::string>(*it, "url", "/backend", "");
    c.backend.model = get_or<std::string>(*it, "model", "/backend", "");
  }
  if (auto it = doc.find("embedding"); it != doc.end()) {
    c.embedding.kind = get_or<std::string>(*it, "kind", "/embedding", "trigram");
    c.embedding.dimension =
        static_cast<std::size_t>(get_or<int>(*it, "dimension", "/embedding", 256));
    c.embedding.url = get_or<std::string>(*it, "url", "/embedding", "");
    c.embedding.model = get_or<std::string>(*it, "model", "/embedding", "");
  }
  if (auto it = doc.find("planner"); it != doc.end()) {
    const std::string p = "/planner";
    auto& pc = c.planner;
    pc.k = get_or<int>(*it, "k", p, pc.k);
    pc.max_steps = get_or<int>(*it, "max_steps", p, pc.max_steps);
    pc.max_corrections_per_step = get_or<int>(*it, "max_corrections_per_step", p, pc.max_corrections_per_step);
    pc.max_total_corrections = get_or<int>(*it, "max_total_corrections", p, pc.max_total_corrections);
    pc.raw_error_messages = get_or<bool>(*it, "raw_error_messages", p, pc.raw_error_messages);
    pc.sampling.n_samples = get_or<int>(*it, "n_samples", p, pc.sampling.n_samples);
    pc.sampling.temperature = get_or<double>(*it, "temperature", p, pc.sampling.temperature);
    pc.sampling.presence_penalty = get_or<double>(*it, "presence_penalty", p, pc.sampling.presence_penalty);
    pc.sampling.max_tokens = get_or<int>(*it, "max_tokens", p, pc.sampling.max_tokens);
  }
  if (auto it = doc.find("grounding"); it != doc.end()) {
    c.planner.grounding.beta = get_or<double>(*it, "beta", "/grounding", c.planner.grounding.beta);
    if (it->contains("threshold_weighted")) {
      c.threshold_weighted = get<double>(*it, "threshold_weighted", "/grounding");
    }
    if (it->contains("threshold_geometric")) {
      c.threshold_geometric = get<double>(*it, "threshold_geometric", "/grounding");
    }
  }
  if (auto it = doc.find("saycan"); it != doc.end()) {
    const std::string p = "/saycan";
    c.saycan.use_subsampling = get_or<bool>(*it, "subsample", p, c.saycan.use_subsampling);
    c.saycan.max_steps = get_or<int>(*it, "max_steps", p, c.saycan.max_steps);
    c.saycan.seed = static_cast<std::uint64_t>(get_or<long>(*it, "seed", p, 0));
    c.flip_probability = get_or<double>(*it, "flip_probability", p, c.flip_probability);
  }
  if (auto a = get_or<std::string>(doc, "annotations", "", ""); !a.empty()) {
    c.annotations = resolve(base, a);
  }
  c.output = resolve(base, get_or<std::string>(doc, "output", "", "out"));
  c.seed = static_cast<std::uint64_t>(get_or<long>(doc, "seed", "", 0));
  c.jobs = get_or<int>(doc, "jobs", "", 1);
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw ConfigError("config file not found: " + path.string());
  const auto doc = detail::parse_document(read_file(path), path.string());
  try {
    return parse_config(doc, path.parent_path());
  } catch (const ParseError& e) {
    throw ParseError(e.path(), path.string() + ": " + e.what());
  }
}

ExperimentConfig default_config(const fs::path& data_dir) {
  ExperimentConfig c;
  c.domain = data_dir / "domains" / "household.json";
  c.demonstrations = data_dir / "demos.json";
  c.correction_examples = data_dir / "corrections.json";
  c.methods = {"cape-explicit"};
  return c;
}

std::uint64_t episode_seed(std::uint64_t global_seed, std::string_view task, std::string_view method) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (int i = 0; i < 8; ++i) {
    const char byte = static_cast<char>((global_seed >> (8 * i)) & 0xff);
    h = fnv1a(h, std::string_view(&byte, 1));
  }
  h = fnv1a(h, task);
  h = fnv1a(h, std::string_view("\x1f", 1));
  return fnv1a(h, method);
}

std::string slug(std::string_view text) {
  std::string out;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!out.empty() && out.back() != '_') {
      out += '_';
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out.empty() ? "task" : out;
}

ordered_json to_json(const EpisodeRecord& r) {
  ordered_json out;
  out["task"] = r.task;
  out["method"] = r.method;
  out["seed"] = r.seed;
  out["metrics"] = metrics::to_json(r.metrics);
  out["trace"] = planner::to_json(r.trace);
  return out;
}

EpisodeRecord record_from_json(const json& doc, const std::string& path) {
  EpisodeRecord r;
  r.task = get<std::string>(doc, "task", path);
  r.method = get<std::string>(doc, "method", path);
  const json& seed = detail::require(doc, "seed", path);
  if (!seed.is_number_unsigned() && !seed.is_number_integer()) {
    throw ParseError(child(path, "seed"), "expected an integer");
  }
  r.seed = seed.get<std::uint64_t>();
  r.metrics = metrics::metrics_from_json(detail::require(doc, "metrics", path), child(path, "metrics"));
  r.trace = planner::trace_from_json(detail::require(doc, "trace", path), child(path, "trace"));
  return r;
}

std::vector<EpisodeRecord> load_results(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("results file not found: " + path.string());
  std::vector<EpisodeRecord> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    const auto where = path.string() + ":" + std::to_string(n);
    const auto doc = detail::parse_document(line, where);
    try {
      out.push_back(record_from_json(doc));
    } catch (const ParseError& e) {
      throw ParseError(e.path(), where + ": " + e.what());
    }
  }
  return out;
}

Experiment::Experiment(ExperimentConfig config) : config_(std::move(config)) {
  config_.validate();
  domain_ = world::load_domain_file(config_.domain);
  demos_ = planner::load_demonstrations_file(config_.demonstrations);
  if (!config_.correction_examples.empty()) {
    corrections_ = planner::load_correction_examples_file(config_.correction_examples);
  }
  for (const auto& t : config_.tasks) {
    if (!t.ground_truth) continue;
    auto gt = metrics::load_ground_truth_file(*t.ground_truth, domain_);
    if (gt.task != t.name) {
      throw ConfigError("ground truth " + t.ground_truth->string() + " is for task '" + gt.task +
                        "', not '" + t.name + "'");
    }
    ground_truth_.emplace(t.name, std::move(gt));
  }
  if (config_.backend.kind == "scripted") {
    script_ = detail::parse_document(read_file(config_.backend.script), config_.backend.script.string());
    llm::ScriptedBackend::from_json(*script_);  // fail early on a bad script
  }
  std::shared_ptr<embed::EmbeddingProvider> base;
  if (config_.embedding.kind == "remote") {
    const auto url = env_or(config_.embedding.url, "CAPE_EMBED_URL");
    if (url.empty()) throw ConfigError("remote embedding needs a url or CAPE_EMBED_URL");
    base = std::make_shared<embed::RemoteEmbeddingProvider>(
        net::make_http_transport(url, env_or("", "CAPE_API_KEY")), config_.embedding.model);
  } else {
    base = std::make_shared<embed::TrigramEmbedder>(config_.embedding.dimension);
  }
  embedder_ = std::make_shared<embed::CachedProvider>(base);
  grounder_ = std::make_unique<grounding::Grounder>(
      world::enumerate_repertoire(domain_.scene, domain_.skills), *embedder_);
}

Experiment::~Experiment() = default;

const metrics::GroundTruthProgram* Experiment::ground_truth(const std::string& task) const {
  auto it = ground_truth_.find(task);
  return it == ground_truth_.end() ? nullptr : &it->second;
}

std::unique_ptr<llm::CompletionBackend> Experiment::make_backend() const {
  if (script_) {
    // Direct initialization from the returned prvalue; the backend is not movable.
    return std::unique_ptr<llm::CompletionBackend>(
        new llm::ScriptedBackend(llm::ScriptedBackend::from_json(*script_)));
  }
  const auto url = env_or(config_.backend.url, "CAPE_LLM_URL");
  if (url.empty()) throw ConfigError("remote backend needs a url or CAPE_LLM_URL");
  return std::make_unique<llm::RemoteCompletionBackend>(
      net::make_http_transport(url, env_or("", "CAPE_API_KEY")), config_.backend.model);
}

EpisodeRecord Experiment::run_episode(const std::string& task, const MethodSpec& method) const {
  EpisodeRecord rec;
  rec.task = task;
  rec.method = std::string(method.name);
  rec.seed = episode_seed(config_.seed, task, method.name);
  try {
    auto backend = make_backend();
    if (method.family == Family::saycan) {
      saycan::SayCanConfig cfg = config_.saycan;
      cfg.seed = rec.seed;
      const auto affordance_seed =
          config_.saycan.seed ? episode_seed(config_.saycan.seed, task, method.name) : rec.seed;
      saycan::AffordanceModel model(method.affordance, affordance_seed, config_.flip_probability);
      saycan::SayCanContext ctx{domain_, *backend, *embedder_, demos_};
      rec.trace = saycan::plan_saycan(task, ctx, cfg, model);
    } else {
      planner::PlannerConfig cfg = config_.planner;
      cfg.strategy = method.strategy;
      cfg.style = method.style;
      cfg.few_shot = method.few_shot;
      cfg.grounding.scorer = method.scorer;
      cfg.grounding.threshold =
          method.scorer == Scorer::geometric ? config_.threshold_geometric : config_.threshold_weighted;
      cfg.seed = rec.seed;
      planner::PlanningContext ctx{domain_, *backend, *embedder_, demos_, corrections_, grounder_.get()};
      rec.trace = planner::plan(task, ctx, cfg);
    }
  } catch (const std::exception& e) {
    rec.trace = failed_trace(task, rec.method, rec.seed, domain_.scene, e.what());
  }
  rec.trace.method = rec.method;
  rec.trace.seed = rec.seed;
  rec.metrics = metrics::evaluate(rec.trace, domain_, ground_truth(task));
  return rec;
}

std::vector<metrics::ReportRow> build_report(std::span<const EpisodeRecord> records,
                                             std::span<const std::string> method_order,
                                             const metrics::AnnotationMatrix* annotations) {
  std::vector<metrics::ReportRow> rows;
  for (const auto& method : method_order) {
    std::vector<metrics::EpisodeMetrics> ms;
    for (const auto& r : records) {
      if (r.method == method) ms.push_back(r.metrics);
    }
    if (ms.empty()) continue;
    std::optional<metrics::AnnotationMatrix> mine;
    if (annotations) mine = annotations_for(*annotations, method);
    rows.push_back(metrics::aggregate(method, ms, mine ? &*mine : nullptr));
  }
  return rows;
}

void write_report(const fs::path& out_dir, std::span<const metrics::ReportRow> rows) {
  fs::create_directories(out_dir);
  std::ofstream(out_dir / "report.csv", std::ios::binary) << metrics::render_csv(rows);
  std::ofstream(out_dir / "report.md", std::ios::binary) << metrics::render_markdown(rows);
}

BatchResult run_batch(const Experiment& exp, const fs::path& out_dir, int jobs) {
  const auto& cfg = exp.config();
  struct Job {
    std::string task;
    const MethodSpec* method;
  };
  std::vector<Job> queue;
  for (const auto& t : cfg.tasks) {
    for (const auto& m : cfg.methods) queue.push_back(Job{t.name, find_method(m)});
  }

  fs::create_directories(out_dir);
  std::ofstream results(out_dir / "results.jsonl", std::ios::binary | std::ios::trunc);
  std::ofstream timings(out_dir / "timings.jsonl", std::ios::binary | std::ios::trunc);
  if (!results || !timings) throw ConfigError("cannot write to " + out_dir.string());

  std::vector<std::optional<EpisodeRecord>> done(queue.size());
  std::vector<double> wall_ms(queue.size(), 0.0);
  std::mutex mu;
  std::condition_variable cv;
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= queue.size()) return;
      const auto start = std::chrono::steady_clock::now();
      auto rec = exp.run_episode(queue[i].task, *queue[i].method);
      const std::chrono::duration<double, std::milli> took = std::chrono::steady_clock::now() - start;
      {
        std::lock_guard lock(mu);
        done[i] = std::move(rec);
        wall_ms[i] = took.count();
      }
      cv.notify_all();
    }
  };

  const auto threads = static_cast<std::size_t>(std::clamp<long>(jobs, 1, static_cast<long>(queue.size())));
  std::vector<std::thread> pool;
  for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);

  // Single writer: lines go out in canonical order as soon as they are ready.
  BatchResult out;
  for (std::size_t i = 0; i < queue.size(); ++i) {
    std::unique_lock lock(mu);
    cv.wait(lock, [&] { return done[i].has_value(); });
    EpisodeRecord rec = std::move(*done[i]);
    const double ms = wall_ms[i];
    lock.unlock();
    results << to_json(rec).dump() << '\n';
    results.flush();
    ordered_json t;
    t["task"] = rec.task;
    t["method"] = rec.method;
    t["wall_ms"] = ms;
    timings << t.dump() << '\n';
    timings.flush();
    out.records.push_back(std::move(rec));
  }
  for (auto& th : pool) th.join();

  std::optional<metrics::AnnotationMatrix> notes;
  if (cfg.annotations) notes = metrics::load_annotations_file(*cfg.annotations);
  out.rows = build_report(out.records, cfg.methods, notes ? &*notes : nullptr);
  write_report(out_dir, out.rows);
  return out;
}

std::vector<metrics::ReportRow> evaluate_results(
    std::span<const EpisodeRecord> records, const world::Domain& domain,
    const std::map<std::string, metrics::GroundTruthProgram>& ground_truth,
    const metrics::AnnotationMatrix* annotations, std::vector<EpisodeRecord>* recomputed) {
  std::vector<EpisodeRecord> fresh(records.begin(), records.end());
  std::vector<std::string> order;
  for (auto& r : fresh) {
    auto it = ground_truth.find(r.task);
    r.metrics = metrics::evaluate(r.trace, domain, it == ground_truth.end() ? nullptr : &it->second);
    if (std::find(order.begin(), order.end(), r.method) == order.end()) order.push_back(r.method);
  }
  auto rows = build_report(fresh, order, annotations);
  if (recomputed) *recomputed = std::move(fresh);
  return rows;
}

}  // namespace cape::harness
