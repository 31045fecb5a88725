#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "cape/error.hpp"
#include "cape/grounding/grounding.hpp"
#include "json.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace cape::grounding;
using cape::embed::TrigramEmbedder;
using cape::llm::CompletionSample;
using cape::world::GroundedAction;

namespace {

GroundedAction action(const std::string& rendered, int id = 0) {
  GroundedAction a;
  a.verb = rendered.substr(0, rendered.find(' '));
  if (id > 0) a.object_id = cape::world::EntityId{id};
  a.rendered = rendered;
  return a;
}

std::vector<GroundedAction> actions(const std::vector<std::string>& texts) {
  std::vector<GroundedAction> out;
  for (const auto& t : texts) out.push_back(action(t));
  return out;
}

CompletionSample sample(const std::string& text, double p) {
  CompletionSample s;
  s.text = text;
  s.mean_logprob = p;
  s.empty_logprobs = false;
  return s;
}

}  // namespace

TEST(Scores, WeightedExamples) {
  EXPECT_DOUBLE_EQ(score_weighted(1.0, 0.0, 0.3), 1.0);
  EXPECT_NEAR(score_weighted(0.8, -1.0, 0.3), 0.5, 1e-15);
  EXPECT_NEAR(score_weighted(0.0, -10.0, 0.3), -3.0, 1e-15);
}

TEST(Scores, GeometricExamples) {
  EXPECT_DOUBLE_EQ(score_geometric(1.0, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(score_geometric(-1.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(score_geometric(-1.0, -7.5), 0.0);
  EXPECT_NEAR(score_geometric(0.0, -std::log(2.0)), 0.25, 1e-15);
}

TEST(Scores, ContractViolations) {
  EXPECT_THROW(score_geometric(0.5, 0.1), cape::ContractViolation);
  EXPECT_THROW(score_geometric(1.5, -0.1), cape::ContractViolation);
  EXPECT_THROW(score_weighted(-1.01, -0.1, 0.3), cape::ContractViolation);
}

TEST(Scores, RandomPairsBoundedGeometricUnboundedWeighted) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> cd(-1.0, 1.0), pd(-20.0, 0.0);
  double wmin = INFINITY;
  for (int i = 0; i < 10000; ++i) {
    const double c = cd(rng), p = pd(rng);
    const double g = score_geometric(c, p);
    ASSERT_GE(g, 0.0);
    ASSERT_LE(g, 1.0);
    EXPECT_NEAR(g, cape::oracle::geometric(c, p), 1e-15);
    wmin = std::min(wmin, score_weighted(c, p, 0.3));
  }
  EXPECT_LT(wmin, -1.0);
}

TEST(Scores, GeometricIsStrictlyMonotone) {
  for (double p = -20.0; p <= 0.0; p += 0.5) {
    for (double c = -1.0; c < 1.0; c += 0.05) {
      EXPECT_LT(score_geometric(c, p), score_geometric(std::min(1.0, c + 0.05), p));
    }
  }
  for (double c = -0.95; c <= 1.0; c += 0.05) {
    for (double p = -20.0; p < 0.0; p += 0.5) {
      EXPECT_LT(score_geometric(c, p), score_geometric(c, std::min(0.0, p + 0.5)));
    }
  }
}

TEST(Config, DefaultThresholds) {
  GroundingConfig g;
  EXPECT_EQ(g.effective_threshold(), 0.4);
  g.scorer = Scorer::weighted;
  EXPECT_EQ(g.effective_threshold(), 0.0);
  g.threshold = -1.0;
  EXPECT_EQ(g.effective_threshold(), -1.0);
}

TEST(Ground, ExactMatchScoresOne) {
  TrigramEmbedder e;
  auto rep = actions({"walk to kitchen", "grab milk", "open fridge"});
  std::vector<CompletionSample> s{sample("grab milk", 0.0)};
  auto out = ground_step(s, rep, e, GroundingConfig{});
  EXPECT_EQ(out.best.admissible.rendered, "grab milk");
  EXPECT_DOUBLE_EQ(out.best.score, 1.0);
  EXPECT_FALSE(out.below_threshold);
}

TEST(Ground, GibberishFallsBelowThreshold) {
  TrigramEmbedder e;
  auto rep = actions({"walk to kitchen", "grab milk", "open fridge"});
  std::vector<CompletionSample> s{sample("qzxv wplk", -0.2), sample("jjjj", -0.1)};
  GroundingConfig cfg;
  cfg.threshold = 0.99;
  EXPECT_TRUE(ground_step(s, rep, e, cfg).below_threshold);
}

TEST(Ground, EmptyRepertoireIsConfigError) {
  TrigramEmbedder e;
  std::vector<CompletionSample> s{sample("grab milk", 0.0)};
  EXPECT_THROW(ground_step(s, {}, e, GroundingConfig{}), cape::ConfigError);
}

TEST(Ground, BlankSamplesOnlyIsInputError) {
  TrigramEmbedder e;
  auto rep = actions({"grab milk"});
  std::vector<CompletionSample> s{sample("  ", 0.0)};
  EXPECT_THROW(ground_step(s, rep, e, GroundingConfig{}), cape::InputError);
}

TEST(Ground, MatchesExhaustiveOracle) {
  TrigramEmbedder e;
  std::mt19937_64 rng(99);
  const std::vector<std::string> pool{
      "walk to kitchen", "walk to bedroom", "find milk", "grab milk", "open fridge",
      "close fridge", "find cup", "grab cup", "put it on kitchen counter", "switch on tv",
      "switch off tv", "sit on sofa", "stand up", "look at mirror", "touch lamp",
      "turn to sink", "find toothbrush", "grab toothbrush", "drink glass", "put it in cabinet"};
  const std::vector<std::string> free{"get some milk", "go into the kitchen", "open the fridge door",
                                      "turn the tv on", "take a cup", "brush teeth", "sit down"};
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<std::string> acts = pool;
    std::shuffle(acts.begin(), acts.end(), rng);
    acts.resize(5 + rng() % 16);
    std::vector<cape::oracle::Sample> os;
    std::vector<CompletionSample> ss;
    const std::size_t n = 1 + rng() % 5;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& t = free[rng() % free.size()];
      const double p = -std::uniform_real_distribution<double>(0.0, 3.0)(rng);
      os.push_back({t, p});
      ss.push_back(sample(t, p));
    }
    for (auto scorer : {Scorer::weighted, Scorer::geometric}) {
      GroundingConfig cfg;
      cfg.scorer = scorer;
      auto got = ground_step(ss, actions(acts), e, cfg);
      auto want = scorer == Scorer::geometric
                      ? cape::oracle::ground(os, acts, cape::oracle::geometric)
                      : cape::oracle::ground(os, acts, [](double c, double p) {
                          return cape::oracle::weighted(c, p, 0.3);
                        });
      EXPECT_EQ(got.best.admissible.rendered, want.first) << "trial " << trial;
      EXPECT_NEAR(got.best.score, want.second, 1e-12);
    }
  }
}

TEST(Ground, PermutationDoesNotChangeChoice) {
  TrigramEmbedder e;
  // Two identical strings for distinct objects tie exactly; the lower id wins.
  auto rep = actions({"grab cup", "open fridge", "walk to kitchen", "grab milk"});
  rep.push_back(action("grab cup", 7));
  rep.push_back(action("grab cup", 3));
  std::vector<CompletionSample> s{sample("grab a cup", -0.3), sample("grab milk now", -0.9)};
  const auto ref = ground_step(s, rep, e, GroundingConfig{});
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    std::shuffle(rep.begin(), rep.end(), rng);
    auto got = ground_step(s, rep, e, GroundingConfig{});
    EXPECT_EQ(got.best.admissible.rendered, ref.best.admissible.rendered);
    EXPECT_EQ(got.best.admissible.object_id, ref.best.admissible.object_id);
  }
}

TEST(Ground, RankCoversEveryActionOnce) {
  TrigramEmbedder e;
  auto rep = actions({"walk to kitchen", "grab milk", "open fridge", "find milk"});
  Grounder g(rep, e);
  std::vector<CompletionSample> s{sample("find the milk", -0.2), sample("open fridge", -1.0)};
  auto ranked = g.rank(s, GroundingConfig{});
  ASSERT_EQ(ranked.size(), 4u);
  EXPECT_TRUE(std::is_sorted(ranked.begin(), ranked.end(), ranks_before));
  for (const auto& c : ranked) {
    EXPECT_NEAR(c.score, score_geometric(c.similarity, c.mean_logprob), 1e-15);
  }
}

// The witness fixture: a weighted scorer with a large beta follows the
// confident but loosely related sample, the geometric scorer the precise one.
TEST(Ground, ScorersDisagreeOnWitnessFixture) {
  auto doc = nlohmann::json::parse(
      cape::testing::read_text(cape::testing::data_path("fixtures/scorer_witness.json")));
  const double beta = doc["beta"];
  std::vector<std::string> acts = doc["repertoire"];
  std::vector<cape::oracle::Sample> os;
  std::vector<CompletionSample> ss;
  for (const auto& s : doc["samples"]) {
    os.push_back({s["text"], s["mean_logprob"]});
    ss.push_back(sample(s["text"], s["mean_logprob"]));
  }
  auto want_w = cape::oracle::ground(os, acts, [&](double c, double p) {
    return cape::oracle::weighted(c, p, beta);
  });
  auto want_g = cape::oracle::ground(os, acts, cape::oracle::geometric);
  ASSERT_NE(want_w.first, want_g.first);

  TrigramEmbedder e;
  GroundingConfig w;
  w.scorer = Scorer::weighted;
  w.beta = beta;
  EXPECT_EQ(ground_step(ss, actions(acts), e, w).best.admissible.rendered, want_w.first);
  EXPECT_EQ(ground_step(ss, actions(acts), e, GroundingConfig{}).best.admissible.rendered,
            want_g.first);
}

TEST(Subsample, SmallRepertoirePassesThrough) {
  TrigramEmbedder e;
  std::vector<GroundedAction> rep;
  for (int i = 0; i < 10; ++i) rep.push_back(action("touch thing " + std::to_string(i)));
  auto out = subsample_repertoire("touch thing 3", "thing", rep, e);
  ASSERT_EQ(out.size(), 10u);
}

TEST(Subsample, LargeSyntheticRepertoire) {
  // 5000 entries, 1200 of them naming milk.
  const std::vector<std::string> verbs{"grab", "find", "touch", "look at", "turn to"};
  std::vector<GroundedAction> rep;
  for (int i = 0; i < 5000; ++i) {
    GroundedAction a;
    a.verb = verbs[i % verbs.size()];
    a.object_name = i < 1200 ? "milk" : "object" + std::to_string(i);
    a.object_id = cape::world::EntityId{i + 1};
    a.rendered = a.verb + " " + a.object_name + (i < 1200 ? " " + std::to_string(i) : "");
    rep.push_back(a);
  }
  TrigramEmbedder e;
  const std::string prototype = "grab object42";
  auto out = subsample_repertoire(prototype, "milk", rep, e);
  EXPECT_LE(out.size(), 1500u);
  const auto milk = std::count_if(out.begin(), out.end(),
                                  [](const auto& a) { return a.object_name == "milk"; });
  EXPECT_EQ(milk, 1000);

  // Brute-force similarity sort: the 500 best entries must all be present.
  std::vector<std::pair<double, std::size_t>> sims;
  const auto q = cape::oracle::trigram(prototype);
  for (std::size_t i = 0; i < rep.size(); ++i) {
    sims.emplace_back(cape::oracle::cosine(q, cape::oracle::trigram(rep[i].rendered)), i);
  }
  std::sort(sims.begin(), sims.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return rep[a.second].rendered < rep[b.second].rendered;
  });
  std::set<int> kept;
  for (const auto& a : out) kept.insert(a.object_id->value);
  // Entries tied with the 500th may be ordered differently by rounding, so the
  // check is exact only away from that boundary.
  const double boundary = sims[499].first;
  std::size_t at_or_above = 0;
  for (const auto& [sim, i] : sims) {
    const bool in = kept.count(rep[i].object_id->value) > 0;
    if (sim > boundary + 1e-9) {
      EXPECT_TRUE(in) << rep[i].rendered;
    }
    if (in && sim >= boundary - 1e-9) ++at_or_above;
  }
  EXPECT_GE(at_or_above, 500u);
  EXPECT_TRUE(std::is_sorted(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.object_id->value < b.object_id->value;
  }));
}

TEST(Subsample, PrototypeIsKept) {
  std::vector<GroundedAction> rep;
  for (int i = 0; i < 2000; ++i) {
    rep.push_back(action("touch item" + std::to_string(i), i + 1));
  }
  TrigramEmbedder e;
  auto out = subsample_repertoire("touch item1234", "nothing", rep, e);
  EXPECT_EQ(out.size(), 500u);
  EXPECT_TRUE(std::any_of(out.begin(), out.end(),
                          [](const auto& a) { return a.rendered == "touch item1234"; }));
}
