// Acceptance runner: one PASS/FAIL line per criterion, exit status 0 only if
// all pass. Usage: cape_acceptance <path to cape binary> <scratch dir>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cape/error.hpp"
#include "cape/grounding/grounding.hpp"
#include "cape/harness/harness.hpp"
#include "cape/metrics/metrics.hpp"
#include "cape/planner/planner.hpp"
#include "cape/saycan/saycan.hpp"
#include "cape/world/world.hpp"
#include "oracles.hpp"
#include "suite_fixture.hpp"

using namespace cape;
using cape::testing::data_path;
using cape::testing::read_text;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

// Collects failed expectations; the first few are reported.
class Check {
 public:
  void expect(bool cond, const std::string& what) {
    if (cond) return;
    if (failures_++ < 3) notes_ += (notes_.empty() ? "" : "; ") + what;
  }
  void note(const std::string& s) { info_ += (info_.empty() ? "" : ", ") + s; }
  Outcome done() const {
    if (failures_ == 0) return {true, info_};
    return {false, std::to_string(failures_) + " failed: " + notes_};
  }

 private:
  int failures_ = 0;
  std::string notes_, info_;
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

llm::ScriptedBackend suite_script() {
  return llm::ScriptedBackend::from_json(json::parse(read_text(data_path("fixtures/suite_script.json"))));
}

// 1. Scoring functions over random (C, P) pairs.
Outcome scoring_suite() {
  Check c;
  std::mt19937_64 rng(20231017);
  std::uniform_real_distribution<double> cd(-1.0, 1.0), pd(-20.0, 0.0);
  double gmin = INFINITY, gmax = -INFINITY, wmin = INFINITY;
  int out_of_range = 0, mismatched = 0;
  for (int i = 0; i < 10000; ++i) {
    const double cc = cd(rng), p = pd(rng);
    const double g = grounding::score_geometric(cc, p);
    if (!(g >= 0.0 && g <= 1.0)) ++out_of_range;
    if (std::abs(g - oracle::geometric(cc, p)) > 1e-15) ++mismatched;
    gmin = std::min(gmin, g);
    gmax = std::max(gmax, g);
    wmin = std::min(wmin, grounding::score_weighted(cc, p, 0.3));
  }
  c.expect(out_of_range == 0, std::to_string(out_of_range) + " geometric scores outside [0,1]");
  c.expect(mismatched == 0, std::to_string(mismatched) + " geometric scores differ from oracle");
  // Boundary cases: exact match at full confidence, and opposite meaning.
  c.expect(grounding::score_geometric(1.0, 0.0) == 1.0, "S_g(1, 0) != 1");
  c.expect(grounding::score_geometric(-1.0, 0.0) == 0.0, "S_g(-1, 0) != 0");
  c.expect(grounding::score_geometric(-1.0, -20.0) == 0.0, "S_g(-1, -20) != 0");
  c.expect(wmin < -1.0, "weighted score never fell below -1");
  c.note("S_g in [" + fmt(gmin) + ", " + fmt(gmax) + "]");
  c.note("min S_w " + fmt(wmin));
  return c.done();
}

// 2. The bundled witness where the two scorers pick different actions.
Outcome scorer_witness() {
  Check c;
  const auto doc = json::parse(read_text(data_path("fixtures/scorer_witness.json")));
  const double beta = doc.at("beta");
  c.expect(beta >= 3.0, "witness beta below 3");
  const std::vector<std::string> acts = doc.at("repertoire");
  std::vector<oracle::Sample> os;
  std::vector<llm::CompletionSample> ss;
  for (const auto& s : doc.at("samples")) {
    os.push_back({s.at("text"), s.at("mean_logprob")});
    llm::CompletionSample cs;
    cs.text = s.at("text");
    cs.mean_logprob = s.at("mean_logprob");
    cs.empty_logprobs = false;
    ss.push_back(cs);
  }
  const auto want_w = oracle::ground(os, acts, [&](double cc, double p) { return oracle::weighted(cc, p, beta); });
  const auto want_g = oracle::ground(os, acts, oracle::geometric);
  c.expect(want_w.first != want_g.first, "brute force finds no disagreement");

  std::vector<world::GroundedAction> rep;
  for (const auto& a : acts) {
    world::GroundedAction g;
    g.verb = a.substr(0, a.find(' '));
    g.rendered = a;
    rep.push_back(g);
  }
  embed::TrigramEmbedder e;
  grounding::GroundingConfig w;
  w.scorer = grounding::Scorer::weighted;
  w.beta = beta;
  const auto got_w = grounding::ground_step(ss, rep, e, w).best.admissible.rendered;
  const auto got_g = grounding::ground_step(ss, rep, e, grounding::GroundingConfig{}).best.admissible.rendered;
  c.expect(got_w == want_w.first, "weighted picked '" + got_w + "', brute force '" + want_w.first + "'");
  c.expect(got_g == want_g.first, "geometric picked '" + got_g + "', brute force '" + want_g.first + "'");
  c.note("S_w -> '" + got_w + "'");
  c.note("S_g -> '" + got_g + "'");
  return c.done();
}

// 3. Error taxonomy: one fixture per simulator type and the empty program.
Outcome taxonomy() {
  Check c;
  // Message shapes per type; <...> (N) fields are filled by the fixture.
  const std::string obj = R"(<[a-z_]+> \(\d+\))";
  const std::string tail = R"( when executing "\[[A-Z]+\] <[a-z_]+> \(\d+\) \[1\]")";
  const std::map<int, std::regex> shape{
      {1, std::regex(obj + " is not (open|closed|on|off)" + tail)},
      {2, std::regex(R"(<character> \(\d+\) does not face )" + obj + tail)},
      {4, std::regex(R"(char room <[a-z_]+> \(\d+\) is not node room <[a-z_]+> \(\d+\))" + tail)},
      {5, std::regex(R"(<character> \(\d+\) is not holding )" + obj + tail)},
      {6, std::regex(obj + " is inside other closed thing" + tail)},
      {7, std::regex(obj + " does not have [A-Z_]+" + tail)},
      {8, std::regex(R"(<character> \(\d+\) does not have a free hand)" + tail)},
      {9, std::regex(R"(<character> \(\d+\) is not close to )" + obj + tail)},
      {10, std::regex("precondition not satisfied" + tail)},
  };
  const auto doc = json::parse(read_text(data_path("fixtures/taxonomy.json")));
  const auto d = world::load_domain_file(data_path("fixtures/" + doc.at("domain").get<std::string>()));
  std::set<int> seen;
  for (const auto& k : doc.at("cases")) {
    world::SceneGraph s = d.scene;
    for (const auto& step : k.at("setup")) {
      s = world::apply_action(s, d.skills, *world::parse_action(s, d.skills, step.get<std::string>()));
    }
    const auto text = k.at("action").get<std::string>();
    const auto a = world::parse_action(s, d.skills, text);
    if (!a) {
      c.expect(false, "unparseable fixture action '" + text + "'");
      continue;
    }
    const auto err = world::check_preconditions(s, d.skills, *a);
    const int want = k.at("type_id");
    if (!err) {
      c.expect(false, "'" + text + "' raised nothing");
      continue;
    }
    c.expect(err->type_id == want, "'" + text + "' gave type " + std::to_string(err->type_id));
    c.expect(err->message == k.at("message").get<std::string>(), "message mismatch for type " + std::to_string(want));
    c.expect(std::regex_match(err->message, shape.at(want)), "type " + std::to_string(want) + " message off template");
    seen.insert(err->type_id);
  }
  c.expect(seen == std::set<int>{1, 2, 4, 5, 6, 7, 8, 9, 10}, "not every simulator type covered");

  testing::Household h;
  auto backend = llm::ScriptedBackend::from_json(
      json::parse(R"({"rules":[{"ends_with":"Step 1:","responses":[""]}]})"));
  const auto trace = planner::plan("get glass of milk", h.context(backend), testing::cape_config());
  c.expect(trace.termination == planner::Termination::empty_program, "empty completion not an empty program");
  c.expect(trace.error_type() == 3, "empty program is not type 3");
  c.note(std::to_string(seen.size()) + " simulator types + type 3");
  return c.done();
}

// 4. Executability gap on the scripted six-task suite.
Outcome executability_gap() {
  Check c;
  auto cfg = harness::load_config(data_path("configs/fixture_batch.json"));
  cfg.methods = {"cape-explicit", "open-loop"};
  const harness::Experiment exp(cfg);
  double cape_exec = 0, cape_corr = 0, open_exec = 0;
  const auto n = static_cast<double>(cfg.tasks.size());
  for (const auto& t : cfg.tasks) {
    const auto a = exp.run_episode(t.name, *harness::find_method("cape-explicit"));
    const auto b = exp.run_episode(t.name, *harness::find_method("open-loop"));
    cape_exec += a.metrics.executable;
    cape_corr += static_cast<double>(a.metrics.corrections);
    open_exec += b.metrics.executable;
  }
  cape_exec = 100.0 * cape_exec / n;
  open_exec = 100.0 * open_exec / n;
  cape_corr /= n;
  c.expect(cfg.tasks.size() == 6, "suite does not have six tasks");
  c.expect(cape_exec == 100.0, "cape-explicit executability " + fmt(cape_exec, 2));
  c.expect(cape_corr <= 3.0, "cape-explicit mean corrections " + fmt(cape_corr, 2));
  c.expect(open_exec <= 50.0, "open-loop executability " + fmt(open_exec, 2));
  c.expect(cape_exec > open_exec, "ordering does not hold");
  c.note("cape-explicit %Exec " + fmt(cape_exec, 2) + " with " + fmt(cape_corr, 2) + " corrections");
  c.note("open-loop %Exec " + fmt(open_exec, 2));
  return c.done();
}

// 5. SayCan scoring cost against CAPE completion calls.
Outcome cost_asymmetry() {
  Check c;
  testing::Household h;
  const auto rep = world::enumerate_repertoire(h.domain.scene, h.domain.skills);
  c.expect(rep.size() + 1 == 200, "repertoire with done has " + std::to_string(rep.size() + 1) + " actions");
  double min_ratio = INFINITY;
  std::size_t five_step = 0;
  for (const auto& t : testing::suite_tasks()) {
    auto sb = suite_script();
    saycan::AffordanceModel m(saycan::AffordanceMode::perfect);
    const saycan::SayCanContext ctx{h.domain, sb, h.embedder, h.demos};
    const auto sc = saycan::plan_saycan(t.task, ctx, {}, m);
    auto cb = suite_script();
    const auto cp = planner::plan(t.task, h.context(cb), testing::cape_config());
    if (cp.steps.size() >= 5) ++five_step;
    const auto bound = 1 + cp.steps.size() + cp.corrections.size();
    c.expect(cp.completion_calls <= bound, t.task + ": completion calls above 1 + steps + corrections");
    c.expect(cp.completion_calls == cb.completion_calls(), t.task + ": completion calls miscounted");
    c.expect(sc.scoring_calls == sb.scoring_calls(), t.task + ": scoring calls miscounted");
    c.expect(sc.scoring_calls >= 10 * cp.completion_calls, t.task + ": ratio below 10");
    min_ratio = std::min(min_ratio, static_cast<double>(sc.scoring_calls) / static_cast<double>(cp.completion_calls));
  }
  c.expect(five_step >= 4, "fewer than four tasks of five or more steps");
  c.note("min scoring/completion ratio " + fmt(min_ratio, 1));
  c.note(std::to_string(five_step) + " tasks with >= 5 steps");
  return c.done();
}

// 6. Noisy affordance flip rate.
Outcome noisy_affordance() {
  Check c;
  const auto d = world::load_domain_file(data_path("domains/household.json"));
  const auto rep = world::enumerate_repertoire(d.scene, d.skills);
  saycan::AffordanceModel noisy(saycan::AffordanceMode::noisy, 20231017, 0.06);
  int flipped = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto& a = rep[static_cast<std::size_t>(i) % rep.size()];
    const int truth = world::check_preconditions(d.scene, d.skills, a) ? 0 : 1;
    if (noisy.query(d.scene, d.skills, a) != truth) ++flipped;
  }
  const double rate = static_cast<double>(flipped) / n;
  c.expect(rate >= 0.05 && rate <= 0.07, "flip rate " + fmt(rate));
  c.expect(noisy.flips() == static_cast<std::uint64_t>(flipped), "model flip count disagrees");
  c.note("flip rate " + fmt(rate));
  return c.done();
}

// 7. Subsampling contract against a brute-force similarity sort.
void subsample_case(Check& c, int targets) {
  const std::vector<std::string> verbs{"grab", "find", "touch", "look at", "turn to"};
  std::vector<world::GroundedAction> rep;
  for (int i = 0; i < 5000; ++i) {
    world::GroundedAction a;
    a.verb = verbs[static_cast<std::size_t>(i) % verbs.size()];
    a.object_name = i < targets ? "milk" : "object" + std::to_string(i);
    a.object_id = world::EntityId{i + 1};
    a.rendered = a.verb + " " + a.object_name + (i < targets ? " " + std::to_string(i) : "");
    rep.push_back(a);
  }
  embed::TrigramEmbedder e;
  const std::string prototype = "grab object42";
  const auto out = grounding::subsample_repertoire(prototype, "milk", rep, e);
  const auto tag = "[" + std::to_string(targets) + " targets] ";
  c.expect(out.size() <= 1500, tag + "subsample has " + std::to_string(out.size()));
  const auto milk = std::count_if(out.begin(), out.end(), [](const auto& a) { return a.object_name == "milk"; });
  c.expect(milk == std::min(targets, 1000), tag + std::to_string(milk) + " target pairs kept");

  std::vector<std::pair<double, std::size_t>> sims;
  const auto q = oracle::trigram(prototype);
  for (std::size_t i = 0; i < rep.size(); ++i) {
    sims.emplace_back(oracle::cosine(q, oracle::trigram(rep[i].rendered)), i);
  }
  std::sort(sims.begin(), sims.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return rep[a.second].rendered < rep[b.second].rendered;
  });
  std::set<int> kept;
  for (const auto& a : out) kept.insert(a.object_id->value);
  // Ties with the 500th entry may round either way; elsewhere membership is exact.
  const double boundary = sims[499].first;
  std::size_t at_or_above = 0, missing = 0;
  for (const auto& [sim, i] : sims) {
    const bool in = kept.count(rep[i].object_id->value) > 0;
    if (sim > boundary + 1e-9 && !in) ++missing;
    if (in && sim >= boundary - 1e-9) ++at_or_above;
  }
  c.expect(missing == 0, tag + std::to_string(missing) + " of the 500 most similar missing");
  c.expect(at_or_above >= 500, tag + "fewer than 500 most-similar pairs kept");
  c.note(tag + std::to_string(out.size()) + " kept");
}

Outcome subsampling() {
  Check c;
  subsample_case(c, 1200);
  subsample_case(c, 300);
  return c.done();
}

// 8. Metric oracles.
Outcome metric_oracles() {
  Check c;
  const oracle::SubsequenceIndex index(8);
  const auto& seqs = index.sequences();
  c.expect(seqs.size() == 9841, "expected 9841 sequences");
  std::size_t pairs = 0, wrong = 0;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    for (std::size_t j = 0; j < seqs.size(); ++j) {
      const auto dp = metrics::lcs_table<int>(seqs[i], seqs[j]);
      if (dp != index.lcs(i, j)) ++wrong;
      ++pairs;
    }
  }
  c.expect(wrong == 0, std::to_string(wrong) + " LCS mismatches");
  // The string entry point goes through the same table after normalization.
  std::mt19937_64 rng(5);
  for (int k = 0; k < 2000; ++k) {
    const auto i = rng() % seqs.size(), j = rng() % seqs.size();
    std::vector<std::string> a, b;
    for (int x : seqs[i]) a.push_back(std::string(1 + x, 'A' + static_cast<char>(x)));
    for (int x : seqs[j]) b.push_back(" " + std::string(1 + x, 'a' + static_cast<char>(x)));
    if (metrics::lcs_length(a, b) != index.lcs(i, j)) ++wrong;
  }
  c.expect(wrong == 0, "normalized LCS mismatches");

  // %GS: nine objects, five slots each, one boolean differs: 44/45.
  world::SceneGraph s;
  s.rooms.push_back({world::EntityId{1}, "kitchen"});
  for (int i = 0; i < 9; ++i) {
    world::ObjectInstance o;
    o.id = world::EntityId{10 + i};
    o.class_name = "thing" + std::to_string(i);
    o.room = world::EntityId{1};
    o.attributes["open"] = i % 2 == 0;
    s.objects.push_back(o);
  }
  auto t = s;
  t.objects[4].attributes["on"] = true;
  const double gs = metrics::graph_similarity(s, t);
  c.expect(std::abs(gs - 100.0 * 44.0 / 45.0) <= 1e-9, "%GS " + fmt(gs, 12));
  t.objects[0].container = world::EntityId{11};
  c.expect(std::abs(metrics::graph_similarity(s, t) - 100.0 * 43.0 / 45.0) <= 1e-9, "%GS with moved object");

  // Affordability: the first grab is skipped, the other three steps run.
  const auto d = world::load_domain_file(data_path("fixtures/kitchen_small.json"));
  std::vector<world::GroundedAction> plan;
  for (const char* step : {"find milk", "grab milk", "open fridge", "grab milk"}) {
    plan.push_back(*world::parse_action(d.scene, d.skills, step));
  }
  const double aff = metrics::affordability(plan, d.scene, d.skills);
  c.expect(std::abs(aff - 75.0) <= 1e-9, "affordability " + fmt(aff, 12));
  c.expect(metrics::executability(plan, d.scene, d.skills) == 0, "plan with a failing step is executable");

  const metrics::AnnotationMatrix agree{{"a", "b", "c"}, {{1, 1, 1}, {0, 0, 0}, {1, 1, 1}}};
  const metrics::AnnotationMatrix split{{"a", "b"}, {{1, 0}, {0, 1}}};
  c.expect(std::abs(metrics::fleiss_kappa(agree) - 1.0) <= 1e-12, "kappa of full agreement");
  c.expect(std::abs(metrics::fleiss_kappa(split) + 1.0) <= 1e-12, "kappa of systematic disagreement");
  std::mt19937_64 krng(2024);
  metrics::AnnotationMatrix random;
  for (int i = 0; i < 1000; ++i) {
    random.plan_ids.push_back(std::to_string(i));
    std::vector<int> row;
    for (int r = 0; r < 5; ++r) row.push_back(static_cast<int>(krng() & 1));
    random.ratings.push_back(row);
  }
  const double k = metrics::fleiss_kappa(random);
  c.expect(std::abs(k) < 0.05, "random kappa " + fmt(k));
  c.expect(std::abs(k - oracle::fleiss(random.ratings, 2)) <= 1e-12, "kappa differs from textbook formula");
  c.note(std::to_string(pairs) + " LCS pairs");
  c.note("random kappa " + fmt(k));
  return c.done();
}

// 9. Two CLI batch runs at different parallelism produce identical bytes.
Outcome determinism(const fs::path& cli, const fs::path& scratch) {
  Check c;
  const auto config = data_path("configs/fixture_batch.json");
  const auto run = [&](int jobs) {
    const auto out = scratch / ("jobs" + std::to_string(jobs));
    fs::remove_all(out);
    const std::string cmd = "\"" + cli.string() + "\" batch --config \"" + config.string() + "\" --jobs " +
                            std::to_string(jobs) + " --out \"" + out.string() + "\" >/dev/null 2>&1";
    c.expect(std::system(cmd.c_str()) == 0, "cape batch --jobs " + std::to_string(jobs) + " failed");
    return out;
  };
  const auto a = run(1);
  const auto b = run(8);
  for (const char* f : {"results.jsonl", "report.csv", "report.md"}) {
    const bool present = fs::exists(a / f) && fs::exists(b / f);
    c.expect(present, std::string(f) + " missing");
    if (present) c.expect(read_text(a / f) == read_text(b / f), std::string(f) + " differs");
  }
  if (fs::exists(a / "results.jsonl")) {
    std::istringstream in(read_text(a / "results.jsonl"));
    std::size_t lines = 0;
    for (std::string l; std::getline(in, l);) ++lines;
    c.expect(lines == 24, std::to_string(lines) + " result lines");
    c.note(std::to_string(lines) + " episodes identical");
  }
  return c.done();
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::fprintf(stderr, "usage: %s <cape binary> <scratch dir>\n", argv[0]);
    return 2;
  }
  const fs::path cli = argv[1];
  const fs::path scratch = argv[2];
  fs::create_directories(scratch);

  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "scoring-function suite", 1.0, scoring_suite},
      {2, "scorer-disagreement witness", 1.0, scorer_witness},
      {3, "error-taxonomy fixtures", 1.0, taxonomy},
      {4, "executability gap", 5.0, executability_gap},
      {5, "cost asymmetry", 10.0, cost_asymmetry},
      {6, "noisy affordance", 1.0, noisy_affordance},
      {7, "subsampling contract", 5.0, subsampling},
      {8, "metric oracles", 30.0, metric_oracles},
      {9, "determinism", 30.0, [&] { return determinism(cli, scratch); }},
  };

  int failed = 0;
  for (const auto& k : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = k.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > k.budget_s) {
      o.ok = false;
      o.detail += (o.detail.empty() ? "" : "; ") + std::string("over time budget");
    }
    failed += !o.ok;
    std::printf("%s %d %s (%.3fs / %.0fs): %s\n", o.ok ? "PASS" : "FAIL", k.id, k.name, secs, k.budget_s,
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
