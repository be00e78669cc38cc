#include <gtest/gtest.h>

#include <set>

#include "fixtures.hpp"
#include "hintloop/error.hpp"
#include "hintloop/jsonl.hpp"
#include "hintloop/pipeline.hpp"

using namespace hintloop;
using hintloop::testing::make_taxonomy;

namespace {

PipelineConfig small_config(const PolicyTaxonomy& tax) {
  auto c = default_pipeline_config(tax);
  c.corpus.n_videos = 160;
  c.corpus.violating_fraction = 0.3;
  c.corpus.min_frames = 100;
  c.corpus.max_frames = 200;
  c.corpus.dims = 8;
  c.train.epochs = 3;
  return c;
}

std::string error_message(const nlohmann::json& doc, const PolicyTaxonomy& tax) {
  try {
    pipeline_config_from_json(doc, &tax, "/base");
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kValidation);
    return e.what();
  }
  ADD_FAILURE() << "config accepted: " << doc.dump();
  return {};
}

}  // namespace

TEST(Config, DefaultsFromTaxonomy) {
  auto tax = make_taxonomy(5);
  auto c = default_pipeline_config(tax);
  EXPECT_EQ(c.corpus.policies, tax.hint_enabled_ids());
  EXPECT_EQ(c.experiment.policies, tax.hint_enabled_ids());
  ASSERT_EQ(c.experiment.arms.size(), 3u);
  EXPECT_EQ(c.experiment.arms[2].mode, AssistMode::kV1V2);
  EXPECT_DOUBLE_EQ(c.min_precision, 0.40);
  EXPECT_DOUBLE_EQ(c.gap_fraction, 0.03);
  EXPECT_TRUE(validate_config(c).empty());
}

TEST(Config, ShippedDefaultParses) {
  auto tax = load_taxonomy(hintloop::testing::source_path("data/taxonomy.json"));
  auto doc = read_json(hintloop::testing::source_path("configs/default.json"));
  auto c = pipeline_config_from_json(doc, &tax, hintloop::testing::source_path("configs"));
  EXPECT_EQ(c.corpus.n_videos, 1000);
  EXPECT_EQ(c.corpus.policies.size(), 18u);
  EXPECT_EQ(c.ranker.v1_policy_limit, 7);
  EXPECT_EQ(c.taxonomy_path.lexically_normal(), hintloop::testing::source_path("data/taxonomy.json").lexically_normal());
}

TEST(Config, PathsAndOverrides) {
  auto tax = make_taxonomy(3);
  nlohmann::json doc = {{"taxonomy", "tax.json"},
                        {"min_precision", 0.5},
                        {"corpus", {{"n_videos", 10}, {"seed", 3}}},
                        {"ranker", {{"combiner", "weighted_sum"}}},
                        {"experiment", {{"arms", {"baseline", {{"name", "assist"}, {"mode", "v1_v2"}}}}}},
                        {"export_arm", "assist"}};
  auto c = pipeline_config_from_json(doc, &tax, "/base");
  EXPECT_EQ(c.taxonomy_path, std::filesystem::path("/base/tax.json"));
  EXPECT_EQ(c.run_root, std::filesystem::path("/base/runs"));
  EXPECT_EQ(c.corpus.n_videos, 10);
  EXPECT_EQ(c.corpus.max_frames, 600);  // default kept
  EXPECT_EQ(c.ranker.combiner, RankCombiner::kWeightedSum);
  ASSERT_EQ(c.experiment.arms.size(), 2u);
  EXPECT_EQ(c.experiment.arms[0].mode, AssistMode::kNone);
  EXPECT_EQ(c.experiment.arms[1].name, "assist");

  doc["run_root"] = "/abs/runs";
  EXPECT_EQ(pipeline_config_from_json(doc, &tax, "/base").run_root, std::filesystem::path("/abs/runs"));
}

TEST(Config, AllErrorsReported) {
  auto tax = make_taxonomy(3);
  nlohmann::json doc = {{"bogus", 1},
                        {"min_precision", 1.5},
                        {"corpus", {{"n_videos", "many"}, {"policies", {"p00", "zz"}}, {"extra", true}}},
                        {"ranker", {{"top_n", 0}, {"combiner", "magic"}}},
                        {"export_arm", "nope"}};
  const std::string msg = error_message(doc, tax);
  for (const char* needle : {"bogus", "min_precision", "n_videos", "zz", "extra", "top_n", "magic", "nope"}) {
    EXPECT_NE(msg.find(needle), std::string::npos) << needle << " missing from:\n" << msg;
  }
  EXPECT_GE(std::count(msg.begin(), msg.end(), '\n'), 7);
}

TEST(Config, SplitValidation) {
  auto tax = make_taxonomy(3);
  auto msg = error_message({{"split", {{"seed_fraction", 0.5}, {"calib_fraction", 0.3}, {"eval_fraction", 0.3}}}}, tax);
  EXPECT_NE(msg.find("review split"), std::string::npos);
  msg = error_message({{"split", {{"seed_fraction", 0.0}}}}, tax);
  EXPECT_NE(msg.find("(0, 1)"), std::string::npos);
}

TEST(Config, HashIgnoresRunRootOnly) {
  auto tax = make_taxonomy(3);
  auto a = default_pipeline_config(tax);
  auto b = a;
  b.run_root = "/elsewhere";
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 12u);
  b.corpus.seed = 99;
  EXPECT_NE(config_hash(a), config_hash(b));
  // to_json / from_json round trip preserves the hash.
  auto back = pipeline_config_from_json(to_json(a), &tax, "/");
  EXPECT_EQ(config_hash(back), config_hash(a));
}

TEST(Splits, StratifiedDisjointDeterministic) {
  auto tax = make_taxonomy(4);
  auto c = small_config(tax);
  auto corpus = generate_corpus(c.corpus);
  auto s = split_corpus(corpus, c.split, 5);
  std::set<std::string> all;
  for (const auto* part : {&s.seed, &s.calib, &s.eval, &s.review}) {
    EXPECT_TRUE(std::is_sorted(part->begin(), part->end()));
    for (const auto& id : *part) EXPECT_TRUE(all.insert(id).second) << id;
  }
  EXPECT_EQ(all.size(), corpus.videos.size());
  std::set<std::string> violating;
  for (const auto& t : corpus.truth) violating.insert(t.video_id);
  for (const auto* part : {&s.seed, &s.calib, &s.eval, &s.review}) {
    EXPECT_TRUE(std::any_of(part->begin(), part->end(), [&](const std::string& id) { return violating.contains(id); }));
  }
  auto again = split_corpus(corpus, c.split, 5);
  EXPECT_EQ(to_json(again), to_json(s));
  EXPECT_EQ(to_json(splits_from_json(to_json(s))), to_json(s));
  EXPECT_NE(to_json(split_corpus(corpus, c.split, 6)), to_json(s));
}

TEST(UnassistedLabels, TruthAndCleanVideos) {
  auto tax = make_taxonomy(2);
  auto c = small_config(tax);
  c.corpus.n_videos = 20;
  auto corpus = generate_corpus(c.corpus);
  std::vector<std::string> ids;
  for (const auto& v : corpus.videos) ids.push_back(v.video_id);
  auto labels = unassisted_labels(corpus, ids, {});
  std::set<std::string> violating;
  for (const auto& t : corpus.truth) violating.insert(t.video_id);
  int pos = 0, weak = 0;
  for (const auto& l : labels) {
    if (l.polarity == Polarity::kPositive) ++pos;
    if (l.polarity == Polarity::kWeakNegative) {
      ++weak;
      EXPECT_FALSE(violating.contains(l.video_id));
      EXPECT_EQ(l.policy_id, kAllPolicies);
    }
  }
  EXPECT_EQ(pos, static_cast<int>(corpus.truth.size()));
  EXPECT_EQ(weak, 20 - static_cast<int>(violating.size()));
}

TEST(SegmentPrecision, OverlapSamePolicy) {
  std::vector<TruthSegment> truth{{"v", "A", 10, 20}};
  std::vector<HintSegment> hints{{"h1", "v", "A", 15, 30, 0.9, 1},
                                 {"h2", "v", "B", 10, 20, 0.9, 2},
                                 {"h3", "w", "A", 10, 20, 0.9, 1},
                                 {"h4", "v", "A", 20, 25, 0.9, 3}};
  EXPECT_DOUBLE_EQ(*segment_precision(hints, truth), 0.25);
  EXPECT_FALSE(segment_precision({}, truth));
}

TEST(CalibratePolicies, MissingPositivesAreInfeasible) {
  std::vector<ScoreSeries> series{{"v", "A", {0.9, 0.1}}, {"v", "B", {0.9, 0.1}}};
  std::vector<TruthSegment> truth{{"v", "A", 0, 1}};
  std::vector<std::string> policies{"A", "B"};
  auto r = calibrate_policies(series, truth, policies, 0.4);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_TRUE(r[0].feasible);
  EXPECT_DOUBLE_EQ(r[0].threshold, 0.9);
  EXPECT_FALSE(r[1].feasible);
}

TEST(BuildHints, TopNPerVideoAndV1Graphs) {
  auto tax = make_taxonomy(3);
  auto c = small_config(tax);
  c.corpus.n_videos = 4;
  c.corpus.violating_fraction = 1.0;
  auto corpus = generate_corpus(c.corpus);
  std::vector<std::string> ids;
  std::vector<ScoreSeries> series;
  for (const auto& v : corpus.videos) {
    ids.push_back(v.video_id);
    for (const auto& p : tax.ids()) {
      std::vector<double> s(static_cast<std::size_t>(v.frame_count));
      for (std::size_t f = 0; f < s.size(); ++f) s[f] = (f / 7) % 2 ? 0.9 : 0.1;  // many short bursts
      series.push_back({v.video_id, p, s});
    }
  }
  std::vector<CalibrationResult> cal;
  for (const auto& p : tax.ids()) {
    CalibrationResult r;
    r.policy_id = p;
    r.feasible = p != "p01";
    r.threshold = r.feasible ? 0.5 : std::numeric_limits<double>::infinity();
    cal.push_back(r);
  }
  RankerConfig rc;
  rc.top_n = 4;
  rc.v1_policy_limit = 2;
  auto built = build_hints(series, corpus, ids, cal, tax, rc, 0.0, {});
  ASSERT_EQ(built.payloads.size(), 4u);
  for (const auto& [id, payload] : built.payloads) {
    EXPECT_EQ(payload.v2.size(), 4u);
    EXPECT_EQ(payload.v1.size(), 2u);
    for (const auto& h : payload.v2) {
      EXPECT_NE(h.policy_id, "p01");
      EXPECT_EQ(h.policy_id, "p02");  // tier 3 ranks first
    }
  }
}

TEST(RunLoop, ReplayIsDeterministic) {
  auto tax = make_taxonomy(4);
  auto c = small_config(tax);
  auto a = run_loop(c, tax, true);
  auto b = run_loop(c, tax, true);
  ASSERT_EQ(a.reports.size(), 3u);
  for (std::size_t i = 0; i < a.reports.size(); ++i) {
    EXPECT_EQ(to_json(a.reports[i]).dump(), to_json(b.reports[i]).dump());
  }
  EXPECT_EQ(a.exported, b.exported);
  ASSERT_TRUE(a.retrain && b.retrain);
  EXPECT_EQ(to_json(*a.retrain).dump(), to_json(*b.retrain).dump());
  EXPECT_EQ(a.experiment.expert.size(), a.splits.review.size());

  auto table = format_retrain(*a.retrain);
  for (const char* col : {"Policy", "AUCPR old", "AUCPR new", "delta"}) {
    EXPECT_NE(table.find(col), std::string::npos) << table;
  }
  EXPECT_GT(a.retrain->positives_after, a.retrain->positives_before);
}

TEST(RunLoop, InvalidConfigRejected) {
  auto tax = make_taxonomy(2);
  auto c = small_config(tax);
  c.export_arm = "missing";
  EXPECT_THROW(run_loop(c, tax, false), Error);
}
