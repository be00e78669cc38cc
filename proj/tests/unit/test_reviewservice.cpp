#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <set>
#include <random>
#include <thread>

#include "fixtures.hpp"
#include "hintloop/error.hpp"
#include "hintloop/reviewservice.hpp"

using namespace hintloop;

namespace {

struct FakeClock {
  std::shared_ptr<std::atomic<std::int64_t>> now = std::make_shared<std::atomic<std::int64_t>>(1000);
  ServiceClock fn() const {
    auto p = now;
    return [p] { return p->load(); };
  }
};

std::vector<VideoMeta> videos(int n) {
  std::vector<VideoMeta> out;
  for (int i = 0; i < n; ++i) out.push_back({"v" + std::to_string(i), 100, 1.0});
  return out;
}

std::map<std::string, HintPayload> payloads(const std::vector<VideoMeta>& vs, int graphs = 7) {
  std::map<std::string, HintPayload> out;
  for (const auto& v : vs) {
    HintPayload p{v.video_id, {}, {}};
    for (int g = 0; g < graphs; ++g) p.v1.push_back({v.video_id, "p" + std::to_string(g), {{0, 0.1}}});
    for (int k = 0; k < 5; ++k) {
      const FrameIndex s = 10 * k;
      p.v2.push_back({make_hint_id(v.video_id, "A", s, s + 5), v.video_id, "A", s, s + 5, 0.9, k + 1});
    }
    out[v.video_id] = p;
  }
  return out;
}

std::string fmt_rater(int worker, int k) {
  return "w" + std::to_string(worker) + "-" + std::to_string(k);
}

ServiceConfig config(std::int64_t lease_ms = 1000) {
  ServiceConfig c;
  c.lease_ms = lease_ms;
  return c;
}

void expect_code(const std::function<void()>& fn, ErrorCode code) {
  try {
    fn();
    ADD_FAILURE() << "no error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

}  // namespace

TEST(ReviewService, FirstAssignmentUsesArmMode) {
  FakeClock clock;
  auto vs = videos(3);
  ReviewService svc(vs, payloads(vs), config(), FeedbackStore(), clock.fn());
  auto g = svc.next_task("g1", RaterKind::kGeneralist);
  ASSERT_TRUE(g);
  EXPECT_EQ(g->assist_mode, AssistMode::kV1V2);
  EXPECT_EQ(g->lease_expiry, 2000);
  auto e = svc.next_task("e1", RaterKind::kExpert);
  ASSERT_TRUE(e);
  EXPECT_EQ(e->assist_mode, AssistMode::kNone);
}

TEST(ReviewService, LeaseIsIdempotent) {
  FakeClock clock;
  auto vs = videos(3);
  ReviewService svc(vs, payloads(vs), config(), FeedbackStore(), clock.fn());
  auto a = svc.next_task("g1", RaterKind::kGeneralist);
  auto b = svc.next_task("g1", RaterKind::kGeneralist);
  EXPECT_EQ(a, b);
  expect_code([&] { svc.next_task("g1", RaterKind::kExpert); }, ErrorCode::kValidation);
}

TEST(ReviewService, QuotaOnSingleVideo) {
  FakeClock clock;
  auto vs = videos(1);
  ReviewService svc(vs, payloads(vs), config(), FeedbackStore(), clock.fn());
  auto t1 = svc.next_task("g1", RaterKind::kGeneralist);
  auto t2 = svc.next_task("g2", RaterKind::kGeneralist);
  ASSERT_TRUE(t1 && t2);
  EXPECT_FALSE(svc.next_task("g3", RaterKind::kGeneralist));
  svc.submit_review(t1->task_id, {false, {}, {}});
  svc.submit_review(t2->task_id, {false, {}, {}});
  for (const char* r : {"g1", "g2", "g3", "g4"}) {
    EXPECT_FALSE(svc.next_task(r, RaterKind::kGeneralist)) << r;
  }
  ASSERT_TRUE(svc.next_task("e1", RaterKind::kExpert));
  EXPECT_FALSE(svc.next_task("e2", RaterKind::kExpert));
  EXPECT_EQ(svc.submission_counts().at("v0"), std::make_pair(0, 2));
}

TEST(ReviewService, SubmittedVideoNeverReofferedToRater) {
  FakeClock clock;
  auto vs = videos(2);
  ReviewService svc(vs, payloads(vs), config(), FeedbackStore(), clock.fn());
  std::set<std::string> seen;
  for (int i = 0; i < 2; ++i) {
    auto t = svc.next_task("g1", RaterKind::kGeneralist);
    ASSERT_TRUE(t);
    EXPECT_TRUE(seen.insert(t->video_id).second);
    svc.submit_review(t->task_id, {false, {}, {}});
  }
  EXPECT_FALSE(svc.next_task("g1", RaterKind::kGeneralist));
  expect_code([&] { svc.submit_review("task-000001", {false, {}, {}}); },
              ErrorCode::kAlreadySubmitted);
  expect_code([&] { svc.submit_review("task-999999", {false, {}, {}}); }, ErrorCode::kNotFound);
}

TEST(ReviewService, LeaseExpiry) {
  FakeClock clock;
  auto vs = videos(1);
  ReviewService svc(vs, payloads(vs), config(1000), FeedbackStore(), clock.fn());
  auto t1 = svc.next_task("g1", RaterKind::kGeneralist);
  auto t2 = svc.next_task("g2", RaterKind::kGeneralist);
  EXPECT_FALSE(svc.next_task("g3", RaterKind::kGeneralist));
  *clock.now += 1000;
  expect_code([&] { svc.submit_review(t1->task_id, {false, {}, {}}); }, ErrorCode::kLeaseExpired);
  // Expired leases free their slots.
  auto t3 = svc.next_task("g3", RaterKind::kGeneralist);
  ASSERT_TRUE(t3);
  EXPECT_EQ(t3->video_id, "v0");
}

TEST(ReviewService, SubmissionValidation) {
  FakeClock clock;
  auto vs = videos(2);
  auto hints = payloads(vs);
  ReviewService svc(vs, hints, config(), FeedbackStore(), clock.fn());
  auto t = svc.next_task("g1", RaterKind::kGeneralist);
  const std::string other_video = t->video_id == "v0" ? "v1" : "v0";
  const auto& foreign = hints.at(other_video).v2[0];
  expect_code([&] { svc.submit_review(t->task_id, {true, {}, {{foreign.hint_id, "", Verdict::kAccepted, 0}}}); },
              ErrorCode::kReference);
  Annotation a{"", "", "", "A", 3, 9, AnnotationOrigin::kOrganic, "", 0};
  expect_code([&] { svc.submit_review(t->task_id, {false, {a}, {}}); }, ErrorCode::kValidation);
  Annotation wrong = a;
  wrong.video_id = other_video;
  expect_code([&] { svc.submit_review(t->task_id, {true, {wrong}, {}}); }, ErrorCode::kValidation);

  const auto& mine = hints.at(t->video_id).v2[0];
  svc.submit_review(t->task_id, {true, {a}, {{mine.hint_id, "", Verdict::kRejected, 0}}});
  auto snap = svc.store().snapshot();
  ASSERT_EQ(snap.annotations.size(), 1u);
  EXPECT_EQ(snap.annotations[0].rater_id, "g1");
  EXPECT_EQ(snap.annotations[0].video_id, t->video_id);
  EXPECT_EQ(snap.annotations[0].timestamp, 1000);
  ASSERT_EQ(snap.responses.size(), 1u);
  EXPECT_EQ(snap.responses[0].rater_id, "g1");
}

TEST(ReviewService, V1ArmCannotRespondToSegmentHints) {
  FakeClock clock;
  auto vs = videos(1);
  auto hints = payloads(vs);
  auto cfg = config();
  cfg.generalist_mode = AssistMode::kV1;
  ReviewService svc(vs, hints, cfg, FeedbackStore(), clock.fn());
  auto t = svc.next_task("g1", RaterKind::kGeneralist);
  expect_code(
      [&] { svc.submit_review(t->task_id, {true, {}, {{hints.at("v0").v2[0].hint_id, "", Verdict::kAccepted, 0}}}); },
      ErrorCode::kReference);
}

TEST(ReviewService, GetHintsByMode) {
  FakeClock clock;
  auto vs = videos(1);
  ReviewService svc(vs, payloads(vs), config(), FeedbackStore(), clock.fn());
  EXPECT_EQ(svc.get_hints("v0", AssistMode::kNone), nlohmann::json::object());
  auto v1 = svc.get_hints("v0", AssistMode::kV1);
  EXPECT_FALSE(v1.contains("v2"));
  EXPECT_LE(v1["v1"].size(), 7u);
  auto v12 = svc.get_hints("v0", AssistMode::kV1V2);
  EXPECT_LE(v12["v2"].size(), 5u);
  EXPECT_EQ(v12["v2"].size(), 5u);
  expect_code([&] { svc.get_hints("nope", AssistMode::kV1); }, ErrorCode::kNotFound);
  auto media = svc.media("v0", 4);
  EXPECT_EQ(media["strip"].size(), 4u);
  EXPECT_EQ(media["strip"][1]["frame"], 25);
}

TEST(ReviewService, MetricsOverCompletedVideos) {
  FakeClock clock;
  auto vs = videos(1);
  auto hints = payloads(vs);
  ReviewService svc(vs, hints, config(), FeedbackStore(), clock.fn());
  auto e = svc.next_task("e", RaterKind::kExpert);
  svc.submit_review(e->task_id, {true, {}, {}});
  auto g1 = svc.next_task("g1", RaterKind::kGeneralist);
  svc.submit_review(g1->task_id, {true, {}, {{hints.at("v0").v2[0].hint_id, "", Verdict::kAccepted, 0}}});
  EXPECT_TRUE(svc.metrics("default")["quality"].is_null());
  auto g2 = svc.next_task("g2", RaterKind::kGeneralist);
  svc.submit_review(g2->task_id, {false, {}, {{hints.at("v0").v2[0].hint_id, "", Verdict::kRejected, 0}}});
  auto m = svc.metrics("default");
  EXPECT_EQ(m["complete_videos"], 1);
  EXPECT_DOUBLE_EQ(m["quality"]["recall"].get<double>(), 0.5);
  EXPECT_DOUBLE_EQ(m["hints"]["acceptance_rate"].get<double>(), 0.5);
  expect_code([&] { svc.metrics("other"); }, ErrorCode::kNotFound);
}

TEST(ReviewService, ConstructionErrors) {
  auto vs = videos(2);
  vs.push_back(vs[0]);
  expect_code([&] { ReviewService(vs, {}, config(), FeedbackStore()); }, ErrorCode::kDuplicate);
  expect_code([&] { ReviewService(videos(1), {}, config(0), FeedbackStore()); }, ErrorCode::kValidation);
  auto bad = payloads(videos(1));
  expect_code([&] { ReviewService(videos(0), bad, config(), FeedbackStore()); }, ErrorCode::kNotFound);
}

// Concurrent raters never push a video past 1 expert + 2 generalists, and
// replaying the request log rebuilds the same store.
TEST(ReviewServiceProperty, ConcurrentQuotaAndReplay) {
  for (int round = 0; round < 5; ++round) {
    auto vs = videos(6);
    auto hints = payloads(vs);
    FakeClock clock;
    ReviewService svc(vs, hints, config(50), FeedbackStore(), clock.fn());
    std::vector<std::thread> threads;
    for (int w = 0; w < 8; ++w) {
      threads.emplace_back([&, w] {
        std::mt19937_64 rng(round * 100 + w);
        const RaterKind pool = w < 2 ? RaterKind::kExpert : RaterKind::kGeneralist;
        for (int i = 0; i < 40; ++i) {
          const std::string rater = fmt_rater(w, static_cast<int>(rng() % 3));
          *clock.now += static_cast<std::int64_t>(rng() % 7);
          auto t = svc.next_task(rater, pool);
          if (!t) continue;
          if (rng() % 4 == 0) continue;  // abandon the lease
          Submission s;
          s.decision = rng() % 2 == 0;
          if (s.decision) s.annotations.push_back({"", "", "", "A", 1, 4, AnnotationOrigin::kOrganic, "", 0});
          if (t->assist_mode == AssistMode::kV1V2) {
            s.hint_responses.push_back({hints.at(t->video_id).v2[rng() % 5].hint_id, "",
                                        rng() % 2 ? Verdict::kAccepted : Verdict::kRejected, 0});
          }
          try {
            svc.submit_review(t->task_id, s);
          } catch (const Error&) {
            // Lease expired under us; the slot is free again.
          }
        }
      });
    }
    for (auto& t : threads) t.join();
    for (const auto& [video, counts] : svc.submission_counts()) {
      ASSERT_LE(counts.first, 1) << video;
      ASSERT_LE(counts.second, 2) << video;
    }

    ReviewService fresh(vs, hints, config(50), FeedbackStore(), clock.fn());
    fresh.replay(svc.request_log());
    ASSERT_EQ(to_json(fresh.store().snapshot()).dump(), to_json(svc.store().snapshot()).dump());
    ASSERT_EQ(fresh.submission_counts(), svc.submission_counts());

    auto dir = hintloop::testing::temp_dir("replay");
    svc.write_request_log(dir / "requests.jsonl");
    svc.store().write_snapshot(dir / "a.json");
    fresh.store().write_snapshot(dir / "b.json");
    std::ifstream a(dir / "a.json"), b(dir / "b.json");
    std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
    ASSERT_EQ(sa, sb);
  }
}
