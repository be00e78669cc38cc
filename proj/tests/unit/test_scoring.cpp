#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "fixtures.hpp"
#include "hintloop/error.hpp"
#include "hintloop/scoring.hpp"
#include "hintloop/synthdata.hpp"

using namespace hintloop;

namespace {

FrameFeatureSeries ramp_series(const std::string& id, FrameIndex frames, int dims) {
  std::vector<double> v;
  for (FrameIndex f = 0; f < frames; ++f) {
    for (int d = 0; d < dims; ++d) v.push_back(static_cast<double>(f * 10 + d + 1));
  }
  return {id, dims, v};
}

// O(k^2): recount precision/recall from scratch at every distinct threshold.
double brute_force_ap(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::set<double, std::greater<>> thresholds(scores.begin(), scores.end());
  const double total_pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  double area = 0, prev_recall = 0;
  for (double t : thresholds) {
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) (labels[i] ? tp : fp) += 1;
    }
    const double recall = tp / total_pos;
    area += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
  }
  return area;
}

CorpusConfig shifted_config(std::uint64_t seed, int n_videos, double shift) {
  CorpusConfig c;
  c.n_videos = n_videos;
  c.violating_fraction = 0.5;
  c.policies = {"A"};
  c.min_frames = 80;
  c.max_frames = 120;
  c.signal_shift = shift;
  c.seed = seed;
  c.dims = 8;
  return c;
}

std::vector<TrainingLabel> truth_labels(const Corpus& corpus, std::span<const VideoMeta> videos) {
  std::vector<TrainingLabel> out;
  for (const auto& v : videos) {
    auto truth = corpus.truth_for(v.video_id);
    if (truth.empty()) {
      out.push_back({v.video_id, std::string(kAllPolicies), 0, v.frame_count, Polarity::kWeakNegative,
                     0.3, "weak"});
    }
    for (const auto& t : truth) {
      out.push_back({t.video_id, t.policy_id, t.start_frame, t.end_frame, Polarity::kPositive, 1.0, "pos"});
    }
  }
  return out;
}

}  // namespace

TEST(Scoring, AggregateWindowExamples) {
  auto f = ramp_series("v", 6, 2);
  auto w = aggregate_window(f, 0, 3);
  EXPECT_EQ(w, (std::vector<double>{1, 2, 11, 12, 21, 22}));
  auto tail = aggregate_window(f, 5, 3);
  EXPECT_EQ(tail, (std::vector<double>{51, 52, 0, 0, 0, 0}));
  for (FrameIndex bad : {FrameIndex{6}, FrameIndex{-1}}) {
    try {
      aggregate_window(f, bad, 3);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kOutOfRange);
    }
  }
}

TEST(Scoring, ZeroModelScoresHalf) {
  FrameFeatureSeries f("v", 2, std::vector<double>(12, 0.0));
  std::vector<std::string> ids{"A", "B"};
  auto model = ScorerModel::zeros(2, 3, ids);
  auto series = score_video(model, f, {3, Aggregation::kFlatConcat});
  ASSERT_EQ(series.size(), 2u);
  for (const auto& s : series) {
    ASSERT_EQ(s.scores.size(), 6u);
    for (double x : s.scores) EXPECT_EQ(x, 0.5);
  }
}

TEST(Scoring, DimensionMismatch) {
  auto f = ramp_series("v", 6, 2);
  std::vector<std::string> ids{"A"};
  auto model = ScorerModel::zeros(3, 3, ids);
  try {
    score_video(model, f, {3, Aggregation::kFlatConcat});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
  auto model2 = ScorerModel::zeros(2, 4, ids);
  EXPECT_THROW(score_video(model2, f, {3, Aggregation::kFlatConcat}), Error);
}

TEST(Scoring, InvalidConfig) {
  EXPECT_THROW(validate(ScorerConfig{0, Aggregation::kFlatConcat}), Error);
  TrainParams p;
  p.epochs = -1;
  EXPECT_THROW(validate(p), Error);
}

TEST(Scoring, ScoresMatchDirectDotProducts) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  std::vector<double> v(40 * 3);
  for (auto& x : v) x = g(rng);
  FrameFeatureSeries f("v", 3, v);
  std::vector<std::string> ids{"A"};
  auto model = ScorerModel::zeros(3, 4, ids);
  for (auto& w : model.policies["A"].weights) w = g(rng);
  model.policies["A"].bias = 0.3;
  auto series = score_video(model, f, {4, Aggregation::kFlatConcat});
  ASSERT_EQ(series.front().scores.size(), 40u);
  for (FrameIndex i = 0; i < 40; ++i) {
    double z = model.policies["A"].bias;
    for (int k = 0; k < 4; ++k) {
      if (i + k >= 40) break;
      for (int d = 0; d < 3; ++d) z += model.policies["A"].weights[k * 3 + d] * f.row(i + k)[d];
    }
    EXPECT_NEAR(series.front().scores[i], 1.0 / (1.0 + std::exp(-z)), 1e-12);
  }
}

TEST(Scoring, TrainedModelPeaksOnSignatureRegion) {
  const int n = 16;
  auto cfg = shifted_config(11, 80, 2.0);
  Corpus train = generate_corpus(cfg);
  auto labels = truth_labels(train, train.videos);
  auto model = train_scorer(labels, train, {n, Aggregation::kFlatConcat}, TrainParams{});

  // 60-frame probe: background noise, frames 10..20 carry signature A.
  auto sig = policy_signature(cfg, "A");
  std::mt19937_64 rng(99);
  std::normal_distribution<double> g;
  std::vector<double> v;
  for (int f = 0; f < 60; ++f) {
    for (int d = 0; d < cfg.dims; ++d) v.push_back(g(rng) + (f >= 10 && f <= 20 ? sig[d] : 0.0));
  }
  FrameFeatureSeries probe("probe", cfg.dims, v);
  auto s = score_video(model, probe, {n, Aggregation::kFlatConcat}).front().scores;
  const auto argmax = std::max_element(s.begin(), s.end()) - s.begin();
  EXPECT_GE(argmax, 10 - n + 1);
  EXPECT_LE(argmax, 20);
}

TEST(Scoring, TrainedAucprAboveNinetyAndNearNearestMean) {
  auto cfg = shifted_config(21, 100, 2.0);
  cfg.violating_fraction = 0.5;
  Corpus corpus = generate_corpus(cfg);
  std::vector<VideoMeta> train_v(corpus.videos.begin(), corpus.videos.begin() + 60);
  std::vector<VideoMeta> eval_v(corpus.videos.begin() + 60, corpus.videos.end());
  auto train_labels = truth_labels(corpus, train_v);
  auto eval_labels = truth_labels(corpus, eval_v);
  const ScorerConfig sc{16, Aggregation::kFlatConcat};
  auto model = train_scorer(train_labels, corpus, sc, TrainParams{});
  TrainParams sampling;
  sampling.seed = 777;
  auto report = eval_aucpr(model, eval_labels, corpus, sc, sampling);
  ASSERT_EQ(report.size(), 1u);
  ASSERT_TRUE(report[0].aucpr.has_value());
  EXPECT_GT(*report[0].aucpr, 0.9);

  // Nearest-mean oracle on the same windows.
  auto tr = sample_windows(train_labels, corpus, sc, TrainParams{});
  std::vector<double> mp(sc.window_frames * cfg.dims), mn(mp.size());
  double np = 0, nn = 0;
  for (const auto& ex : tr) {
    auto w = aggregate_window(corpus.features_for(ex.video_id), ex.start, sc.window_frames);
    auto& m = ex.polarity == Polarity::kPositive ? mp : mn;
    (ex.polarity == Polarity::kPositive ? np : nn) += 1;
    for (std::size_t i = 0; i < w.size(); ++i) m[i] += w[i];
  }
  std::vector<double> dir(mp.size());
  for (std::size_t i = 0; i < dir.size(); ++i) dir[i] = mp[i] / np - mn[i] / nn;
  auto ev = sample_windows(eval_labels, corpus, sc, sampling);
  std::vector<double> scores;
  std::vector<int> truth;
  for (const auto& ex : ev) {
    auto w = aggregate_window(corpus.features_for(ex.video_id), ex.start, sc.window_frames);
    double z = 0;
    for (std::size_t i = 0; i < w.size(); ++i) z += w[i] * dir[i];
    scores.push_back(z);
    truth.push_back(ex.polarity == Polarity::kPositive ? 1 : 0);
  }
  const double oracle = *average_precision(scores, truth);
  EXPECT_GT(*report[0].aucpr, oracle - 0.05) << "nearest-mean " << oracle;
}

TEST(Scoring, ZeroEpochsIsInitialization) {
  auto cfg = shifted_config(3, 20, 2.0);
  Corpus corpus = generate_corpus(cfg);
  TrainParams p;
  p.epochs = 0;
  auto model = train_scorer(truth_labels(corpus, corpus.videos), corpus, {16, Aggregation::kFlatConcat}, p);
  ASSERT_EQ(model.policies.count("A"), 1u);
  for (double w : model.policies["A"].weights) EXPECT_EQ(w, 0.0);
  EXPECT_EQ(model.policies["A"].bias, 0.0);
}

TEST(Scoring, DuplicateLabelsDedupToSameModel) {
  auto cfg = shifted_config(4, 20, 2.0);
  Corpus corpus = generate_corpus(cfg);
  auto labels = truth_labels(corpus, corpus.videos);
  auto doubled = labels;
  doubled.insert(doubled.end(), labels.begin(), labels.end());
  const ScorerConfig sc{16, Aggregation::kFlatConcat};
  auto a = train_scorer(labels, corpus, sc, TrainParams{});
  auto b = train_scorer(doubled, corpus, sc, TrainParams{});
  EXPECT_EQ(to_json(a), to_json(b));
  EXPECT_EQ(to_json(a), to_json(train_scorer(labels, corpus, sc, TrainParams{})));
}

TEST(Scoring, PolicyWithoutPositivesIsSkipped) {
  auto cfg = shifted_config(4, 20, 2.0);
  Corpus corpus = generate_corpus(cfg);
  std::vector<std::string> ids{"A", "Z"};
  auto model = train_scorer(truth_labels(corpus, corpus.videos), corpus, {16, Aggregation::kFlatConcat},
                            TrainParams{}, ids);
  EXPECT_EQ(model.policies.count("Z"), 0u);
  EXPECT_EQ(model.skipped_policies, std::vector<std::string>{"Z"});
}

TEST(Scoring, ModelJsonRoundTrip) {
  auto cfg = shifted_config(4, 20, 2.0);
  Corpus corpus = generate_corpus(cfg);
  auto model = train_scorer(truth_labels(corpus, corpus.videos), corpus, {16, Aggregation::kFlatConcat},
                            TrainParams{});
  auto dir = hintloop::testing::temp_dir("model");
  save_model(model, dir / "m.json");
  auto back = load_model(dir / "m.json");
  EXPECT_EQ(to_json(back), to_json(model));
  EXPECT_EQ(back.label_counts, model.label_counts);
}

TEST(Aucpr, ClosedFormExamples) {
  EXPECT_DOUBLE_EQ(*average_precision(std::vector<double>{1, 0, 1, 0}, std::vector<int>{1, 0, 1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(*average_precision(std::vector<double>(8, 0.3), std::vector<int>{1, 0, 0, 1, 0, 0, 0, 1}),
                   3.0 / 8.0);
  // Step curve: P=1 at R=1/2, P=2/3 at R=1.
  EXPECT_NEAR(*average_precision(std::vector<double>{0.9, 0.8, 0.4, 0.2}, std::vector<int>{1, 0, 1, 0}),
              5.0 / 6.0, 1e-12);
  EXPECT_FALSE(average_precision(std::vector<double>{0.5}, std::vector<int>{0}).has_value());
  EXPECT_THROW(average_precision(std::vector<double>{0.5}, std::vector<int>{0, 1}), Error);
}

TEST(AucprProperty, MatchesBruteForceOracle) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 500; ++trial) {
    std::uniform_int_distribution<int> size(1, 100), coarse(0, 9);
    const int k = size(rng);
    std::vector<double> scores(k);
    std::vector<int> labels(k);
    for (int i = 0; i < k; ++i) {
      scores[i] = coarse(rng) / 10.0;  // plenty of ties
      labels[i] = static_cast<int>(rng() % 3 == 0);
    }
    if (std::count(labels.begin(), labels.end(), 1) == 0) labels[0] = 1;
    ASSERT_NEAR(*average_precision(scores, labels), brute_force_ap(scores, labels), 1e-9);
  }
}

TEST(Scoring, EvalRejectsTrainingOverlapAndMarksUndefined) {
  auto cfg = shifted_config(4, 20, 2.0);
  Corpus corpus = generate_corpus(cfg);
  std::vector<VideoMeta> first(corpus.videos.begin(), corpus.videos.begin() + 10);
  std::vector<VideoMeta> rest(corpus.videos.begin() + 10, corpus.videos.end());
  const ScorerConfig sc{16, Aggregation::kFlatConcat};
  auto model = train_scorer(truth_labels(corpus, first), corpus, sc, TrainParams{});
  try {
    eval_aucpr(model, truth_labels(corpus, first), corpus, sc, TrainParams{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kContract);
  }
  std::vector<TrainingLabel> negatives_only;
  for (const auto& l : truth_labels(corpus, rest)) {
    if (l.polarity != Polarity::kPositive) negatives_only.push_back(l);
  }
  auto report = eval_aucpr(model, negatives_only, corpus, sc, TrainParams{});
  ASSERT_EQ(report.size(), 1u);
  EXPECT_FALSE(report[0].aucpr.has_value());
  EXPECT_EQ(report[0].positive_count, 0);
}

// Window-count and padding invariants over random shapes.
TEST(ScoringProperty, WindowCountAndZeroPadding) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 300; ++trial) {
    const FrameIndex frames = 1 + static_cast<FrameIndex>(rng() % 50);
    const int dims = 1 + static_cast<int>(rng() % 4);
    const int n = 1 + static_cast<int>(rng() % 20);
    std::vector<double> v(static_cast<std::size_t>(frames * dims));
    for (auto& x : v) x = g(rng);
    FrameFeatureSeries f("v", dims, v);
    std::vector<std::string> ids{"A"};
    auto model = ScorerModel::zeros(dims, n, ids);
    for (auto& w : model.policies["A"].weights) w = g(rng);
    auto s = score_video(model, f, {n, Aggregation::kFlatConcat});
    ASSERT_EQ(static_cast<FrameIndex>(s.front().scores.size()), frames);
    for (double x : s.front().scores) ASSERT_TRUE(x >= 0.0 && x <= 1.0);
    for (FrameIndex start = std::max<FrameIndex>(0, frames - n + 1); start < frames; ++start) {
      auto w = aggregate_window(f, start, n);
      ASSERT_EQ(w.size(), static_cast<std::size_t>(n * dims));
      for (std::size_t i = static_cast<std::size_t>((frames - start) * dims); i < w.size(); ++i) {
        ASSERT_EQ(w[i], 0.0);
      }
    }
  }
}

// Adding correctly labelled data from the same distribution does not lower
// held-out AUCPR by more than 0.02 (median over 5 seeds).
TEST(ScoringProperty, MoreCorrectLabelsDoNotHurt) {
  std::vector<double> deltas;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto cfg = shifted_config(100 + seed, 120, 1.0);
    cfg.violating_fraction = 0.3;
    Corpus corpus = generate_corpus(cfg);
    std::vector<VideoMeta> small(corpus.videos.begin(), corpus.videos.begin() + 20);
    std::vector<VideoMeta> big(corpus.videos.begin(), corpus.videos.begin() + 70);
    std::vector<VideoMeta> eval(corpus.videos.begin() + 70, corpus.videos.end());
    const ScorerConfig sc{16, Aggregation::kFlatConcat};
    TrainParams p;
    p.seed = seed;
    auto before = train_scorer(truth_labels(corpus, small), corpus, sc, p);
    auto after = train_scorer(truth_labels(corpus, big), corpus, sc, p);
    auto eval_labels = truth_labels(corpus, eval);
    const double a = eval_aucpr(before, eval_labels, corpus, sc, p).front().aucpr.value();
    const double b = eval_aucpr(after, eval_labels, corpus, sc, p).front().aucpr.value();
    deltas.push_back(b - a);
  }
  std::sort(deltas.begin(), deltas.end());
  EXPECT_GE(deltas[2], -0.02);
}

TEST(Scoring, SampleWindowsStayInsideLongSegmentsAndCentreShortOnes) {
  auto cfg = shifted_config(4, 4, 2.0);
  Corpus corpus = generate_corpus(cfg);
  const auto& v = corpus.videos.front();
  std::vector<TrainingLabel> labels{
      {v.video_id, "A", 10, 50, Polarity::kPositive, 1.0, "long"},
      {v.video_id, "A", 60, 62, Polarity::kPositive, 1.0, "short"}};
  const ScorerConfig sc{16, Aggregation::kFlatConcat};
  auto ex = sample_windows(labels, corpus, sc, TrainParams{});
  int long_count = 0;
  for (const auto& e : ex) {
    if (e.start >= 10 && e.start + 16 <= 50) ++long_count;
  }
  EXPECT_EQ(long_count, 8);
  ASSERT_EQ(ex.size(), 9u);
  EXPECT_EQ(ex.back().start, 60 - 7);
}
