#include "hintloop/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <fmt/format.h>

#include "hintloop/error.hpp"
#include "hintloop/hash.hpp"

namespace hintloop {
namespace {

using nlohmann::json;

class ConfigReader {
 public:
  explicit ConfigReader(std::vector<std::string>& errors) : errors_(errors) {}

  void reject_unknown(const json& obj, std::initializer_list<std::string_view> allowed,
                      std::string_view where) {
    if (!obj.is_object()) {
      errors_.push_back(fmt::format("{}: expected an object", where));
      return;
    }
    for (const auto& [key, _] : obj.items()) {
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
        errors_.push_back(fmt::format("{}: unknown key \"{}\"", where, key));
      }
    }
  }

  template <typename T>
  void read(const json& obj, const char* key, T& out, std::string_view where) {
    if (!obj.is_object() || !obj.contains(key)) return;
    try {
      out = obj.at(key).get<T>();
    } catch (const json::exception&) {
      errors_.push_back(fmt::format("{}.{}: wrong type", where, key));
    }
  }

 private:
  std::vector<std::string>& errors_;
};

std::string_view combiner_name(RankCombiner c) {
  return c == RankCombiner::kLexicographic ? "lexicographic" : "weighted_sum";
}

}  // namespace

PipelineConfig default_pipeline_config(const PolicyTaxonomy& taxonomy) {
  PipelineConfig c;
  c.corpus.policies = taxonomy.hint_enabled_ids();
  c.experiment.arms = {{"baseline", AssistMode::kNone}, {"v1", AssistMode::kV1},
                       {"v1_v2", AssistMode::kV1V2}};
  c.experiment.policies = c.corpus.policies;
  return c;
}

std::vector<std::string> validate_config(const PipelineConfig& config) {
  std::vector<std::string> errors;
  auto check = [&](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      errors.emplace_back(e.what());
    }
  };
  check([&] { validate(config.corpus); });
  check([&] { validate(config.scorer); });
  check([&] { validate(config.train); });
  check([&] { validate(config.ranker); });
  check([&] { validate(config.experiment); });
  if (!(config.min_precision > 0 && config.min_precision < 1)) {
    errors.push_back("min_precision must lie in (0, 1)");
  }
  if (!(config.gap_fraction >= 0 && config.gap_fraction < 1)) {
    errors.push_back("gap_fraction must lie in [0, 1)");
  }
  const auto& s = config.split;
  for (double f : {s.seed_fraction, s.calib_fraction, s.eval_fraction}) {
    if (!(f > 0 && f < 1)) {
      errors.push_back("split fractions must lie in (0, 1)");
      break;
    }
  }
  if (s.seed_fraction + s.calib_fraction + s.eval_fraction >= 1.0) {
    errors.push_back("split fractions must leave room for the review split");
  }
  const bool has_export_arm =
      std::any_of(config.experiment.arms.begin(), config.experiment.arms.end(),
                  [&](const ExperimentArm& a) { return a.name == config.export_arm; });
  if (!has_export_arm) {
    errors.push_back(fmt::format("export_arm \"{}\" is not an experiment arm", config.export_arm));
  }
  if (!(config.export_labels.positive_weight > 0 && config.export_labels.clean_negative_weight > 0 &&
        config.export_labels.weak_negative_weight > 0)) {
    errors.push_back("export weights must be > 0");
  }
  return errors;
}

json to_json(const PipelineConfig& c) {
  json arms = json::array();
  for (const auto& a : c.experiment.arms) arms.push_back({{"name", a.name}, {"mode", to_string(a.mode)}});
  return {
      {"run_root", c.run_root.string()},
      {"taxonomy", c.taxonomy_path.string()},
      {"corpus",
       {{"n_videos", c.corpus.n_videos},
        {"min_frames", c.corpus.min_frames},
        {"max_frames", c.corpus.max_frames},
        {"fps", c.corpus.fps},
        {"violating_fraction", c.corpus.violating_fraction},
        {"policies", c.corpus.policies},
        {"policy_weights", c.corpus.policy_weights},
        {"min_segments", c.corpus.min_segments},
        {"max_segments", c.corpus.max_segments},
        {"min_segment_frames", c.corpus.min_segment_frames},
        {"max_segment_frames", c.corpus.max_segment_frames},
        {"dims", c.corpus.dims},
        {"signal_shift", c.corpus.signal_shift},
        {"noise_sigma", c.corpus.noise_sigma},
        {"signature_seed", c.corpus.signature_seed},
        {"seed", c.corpus.seed},
        {"id_prefix", c.corpus.id_prefix}}},
      {"split",
       {{"seed_fraction", c.split.seed_fraction},
        {"calib_fraction", c.split.calib_fraction},
        {"eval_fraction", c.split.eval_fraction}}},
      {"scorer", {{"window_frames", c.scorer.window_frames}, {"aggregation", "flat_concat"}}},
      {"train",
       {{"learning_rate", c.train.learning_rate},
        {"epochs", c.train.epochs},
        {"seed", c.train.seed},
        {"l2", c.train.l2},
        {"windows_per_segment", c.train.windows_per_segment},
        {"windows_per_weak_negative", c.train.windows_per_weak_negative},
        {"cross_policy_negative_weight", c.train.cross_policy_negative_weight},
        {"dedup", c.train.dedup},
        {"balance_classes", c.train.balance_classes}}},
      {"ranker",
       {{"top_n", c.ranker.top_n},
        {"max_points", c.ranker.max_points},
        {"v1_policy_limit", c.ranker.v1_policy_limit},
        {"combiner", combiner_name(c.ranker.combiner)},
        {"tier_weight", c.ranker.tier_weight}}},
      {"min_precision", c.min_precision},
      {"gap_fraction", c.gap_fraction},
      {"experiment",
       {{"arms", arms},
        {"seed", c.experiment.seed},
        {"expert", to_json(c.experiment.expert)},
        {"generalist", to_json(c.experiment.generalist)}}},
      {"export_arm", c.export_arm},
      {"export",
       {{"positive_weight", c.export_labels.positive_weight},
        {"clean_negative_weight", c.export_labels.clean_negative_weight},
        {"weak_negative_weight", c.export_labels.weak_negative_weight}}},
  };
}

PipelineConfig pipeline_config_from_json(const json& doc, const PolicyTaxonomy* taxonomy,
                                         const std::filesystem::path& base_dir) {
  std::vector<std::string> errors;
  ConfigReader r(errors);
  PipelineConfig c = taxonomy != nullptr ? default_pipeline_config(*taxonomy) : PipelineConfig{};
  if (taxonomy == nullptr) {
    c.experiment.arms = {{"baseline", AssistMode::kNone}, {"v1", AssistMode::kV1},
                         {"v1_v2", AssistMode::kV1V2}};
  }
  r.reject_unknown(doc,
                   {"run_root", "taxonomy", "corpus", "split", "scorer", "train", "ranker",
                    "min_precision", "gap_fraction", "experiment", "export_arm", "export"},
                   "config");
  if (!errors.empty() && !doc.is_object()) throw Error(ErrorCode::kValidation, errors.front());

  auto path_of = [&](const char* key, std::filesystem::path& out) {
    std::string s;
    r.read(doc, key, s, "config");
    if (s.empty()) return;
    std::filesystem::path p(s);
    out = p.is_absolute() ? p : base_dir / p;
  };
  path_of("run_root", c.run_root);
  if (!doc.contains("run_root")) c.run_root = base_dir / "runs";
  path_of("taxonomy", c.taxonomy_path);

  if (doc.contains("corpus")) {
    const json& j = doc["corpus"];
    r.reject_unknown(j,
                     {"n_videos", "min_frames", "max_frames", "fps", "violating_fraction",
                      "policies", "policy_weights", "min_segments", "max_segments",
                      "min_segment_frames", "max_segment_frames", "dims", "signal_shift",
                      "noise_sigma", "signature_seed", "seed", "id_prefix"},
                     "corpus");
    r.read(j, "n_videos", c.corpus.n_videos, "corpus");
    r.read(j, "min_frames", c.corpus.min_frames, "corpus");
    r.read(j, "max_frames", c.corpus.max_frames, "corpus");
    r.read(j, "fps", c.corpus.fps, "corpus");
    r.read(j, "violating_fraction", c.corpus.violating_fraction, "corpus");
    r.read(j, "policies", c.corpus.policies, "corpus");
    r.read(j, "policy_weights", c.corpus.policy_weights, "corpus");
    r.read(j, "min_segments", c.corpus.min_segments, "corpus");
    r.read(j, "max_segments", c.corpus.max_segments, "corpus");
    r.read(j, "min_segment_frames", c.corpus.min_segment_frames, "corpus");
    r.read(j, "max_segment_frames", c.corpus.max_segment_frames, "corpus");
    r.read(j, "dims", c.corpus.dims, "corpus");
    r.read(j, "signal_shift", c.corpus.signal_shift, "corpus");
    r.read(j, "noise_sigma", c.corpus.noise_sigma, "corpus");
    r.read(j, "signature_seed", c.corpus.signature_seed, "corpus");
    r.read(j, "seed", c.corpus.seed, "corpus");
    r.read(j, "id_prefix", c.corpus.id_prefix, "corpus");
  }
  if (doc.contains("split")) {
    const json& j = doc["split"];
    r.reject_unknown(j, {"seed_fraction", "calib_fraction", "eval_fraction"}, "split");
    r.read(j, "seed_fraction", c.split.seed_fraction, "split");
    r.read(j, "calib_fraction", c.split.calib_fraction, "split");
    r.read(j, "eval_fraction", c.split.eval_fraction, "split");
  }
  if (doc.contains("scorer")) {
    const json& j = doc["scorer"];
    r.reject_unknown(j, {"window_frames", "aggregation"}, "scorer");
    r.read(j, "window_frames", c.scorer.window_frames, "scorer");
    std::string agg = "flat_concat";
    r.read(j, "aggregation", agg, "scorer");
    if (agg != "flat_concat") errors.push_back("scorer.aggregation: only flat_concat is supported");
  }
  if (doc.contains("train")) {
    const json& j = doc["train"];
    r.reject_unknown(j,
                     {"learning_rate", "epochs", "seed", "l2", "windows_per_segment",
                      "windows_per_weak_negative", "cross_policy_negative_weight", "dedup",
                      "balance_classes"},
                     "train");
    r.read(j, "learning_rate", c.train.learning_rate, "train");
    r.read(j, "epochs", c.train.epochs, "train");
    r.read(j, "seed", c.train.seed, "train");
    r.read(j, "l2", c.train.l2, "train");
    r.read(j, "windows_per_segment", c.train.windows_per_segment, "train");
    r.read(j, "windows_per_weak_negative", c.train.windows_per_weak_negative, "train");
    r.read(j, "cross_policy_negative_weight", c.train.cross_policy_negative_weight, "train");
    r.read(j, "dedup", c.train.dedup, "train");
    r.read(j, "balance_classes", c.train.balance_classes, "train");
  }
  if (doc.contains("ranker")) {
    const json& j = doc["ranker"];
    r.reject_unknown(j, {"top_n", "max_points", "v1_policy_limit", "combiner", "tier_weight"},
                     "ranker");
    r.read(j, "top_n", c.ranker.top_n, "ranker");
    r.read(j, "max_points", c.ranker.max_points, "ranker");
    r.read(j, "v1_policy_limit", c.ranker.v1_policy_limit, "ranker");
    r.read(j, "tier_weight", c.ranker.tier_weight, "ranker");
    std::string combiner(combiner_name(c.ranker.combiner));
    r.read(j, "combiner", combiner, "ranker");
    if (combiner == "lexicographic") {
      c.ranker.combiner = RankCombiner::kLexicographic;
    } else if (combiner == "weighted_sum") {
      c.ranker.combiner = RankCombiner::kWeightedSum;
    } else {
      errors.push_back(fmt::format("ranker.combiner: unknown value \"{}\"", combiner));
    }
  }
  r.read(doc, "min_precision", c.min_precision, "config");
  r.read(doc, "gap_fraction", c.gap_fraction, "config");
  if (doc.contains("experiment")) {
    const json& j = doc["experiment"];
    r.reject_unknown(j, {"arms", "seed", "expert", "generalist"}, "experiment");
    r.read(j, "seed", c.experiment.seed, "experiment");
    if (j.contains("arms")) {
      c.experiment.arms.clear();
      for (const auto& a : j["arms"]) {
        try {
          const std::string name = a.is_string() ? a.get<std::string>() : a.at("name").get<std::string>();
          const std::string mode = a.is_string() ? name : a.at("mode").get<std::string>();
          c.experiment.arms.push_back({name, parse_assist_mode(mode)});
        } catch (const std::exception& e) {
          errors.push_back(fmt::format("experiment.arms: {}", e.what()));
        }
      }
    }
    for (const char* key : {"expert", "generalist"}) {
      if (!j.contains(key)) continue;
      try {
        (std::string_view(key) == "expert" ? c.experiment.expert : c.experiment.generalist) =
            profile_from_json(j[key]);
      } catch (const std::exception& e) {
        errors.push_back(fmt::format("experiment.{}: {}", key, e.what()));
      }
    }
  }
  r.read(doc, "export_arm", c.export_arm, "config");
  if (doc.contains("export")) {
    const json& j = doc["export"];
    r.reject_unknown(j, {"positive_weight", "clean_negative_weight", "weak_negative_weight"}, "export");
    r.read(j, "positive_weight", c.export_labels.positive_weight, "export");
    r.read(j, "clean_negative_weight", c.export_labels.clean_negative_weight, "export");
    r.read(j, "weak_negative_weight", c.export_labels.weak_negative_weight, "export");
  }
  c.experiment.policies = c.corpus.policies;
  if (taxonomy != nullptr) {
    for (const auto& p : c.corpus.policies) {
      if (!taxonomy->contains(p)) errors.push_back(fmt::format("corpus.policies: unknown policy \"{}\"", p));
    }
  }
  for (auto& e : validate_config(c)) errors.push_back(std::move(e));
  if (!errors.empty()) {
    std::string msg;
    for (const auto& e : errors) msg += e + "\n";
    msg.pop_back();
    throw Error(ErrorCode::kValidation, msg);
  }
  return c;
}

std::string config_hash(const PipelineConfig& config) {
  json j = to_json(config);
  j.erase("run_root");
  return to_hex(fnv1a64(j.dump())).substr(0, 12);
}

Splits split_corpus(const Corpus& corpus, const SplitConfig& config, std::uint64_t seed) {
  std::set<std::string> violating;
  for (const auto& t : corpus.truth) violating.insert(t.video_id);
  std::vector<std::string> groups[2];
  for (const auto& v : corpus.videos) groups[violating.contains(v.video_id) ? 0 : 1].push_back(v.video_id);
  Splits s;
  for (int g = 0; g < 2; ++g) {
    auto& ids = groups[g];
    std::sort(ids.begin(), ids.end());
    std::mt19937_64 rng(mix_seed(seed, g == 0 ? "split-violating" : "split-clean"));
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto n = static_cast<double>(ids.size());
    const auto n_seed = static_cast<std::size_t>(std::llround(n * config.seed_fraction));
    const auto n_calib = static_cast<std::size_t>(std::llround(n * config.calib_fraction));
    const auto n_eval = static_cast<std::size_t>(std::llround(n * config.eval_fraction));
    std::size_t i = 0;
    for (; i < ids.size() && i < n_seed; ++i) s.seed.push_back(ids[i]);
    for (; i < ids.size() && i < n_seed + n_calib; ++i) s.calib.push_back(ids[i]);
    for (; i < ids.size() && i < n_seed + n_calib + n_eval; ++i) s.eval.push_back(ids[i]);
    for (; i < ids.size(); ++i) s.review.push_back(ids[i]);
  }
  for (auto* v : {&s.seed, &s.calib, &s.review, &s.eval}) std::sort(v->begin(), v->end());
  return s;
}

json to_json(const Splits& s) {
  return {{"seed", s.seed}, {"calib", s.calib}, {"review", s.review}, {"eval", s.eval}};
}

Splits splits_from_json(const json& j) {
  return {j.at("seed").get<std::vector<std::string>>(), j.at("calib").get<std::vector<std::string>>(),
          j.at("review").get<std::vector<std::string>>(), j.at("eval").get<std::vector<std::string>>()};
}

std::vector<TrainingLabel> unassisted_labels(const Corpus& corpus,
                                             std::span<const std::string> video_ids,
                                             const ExportConfig& config) {
  std::vector<TrainingLabel> out;
  for (const auto& id : video_ids) {
    const VideoMeta& v = corpus.video(id);
    auto truth = corpus.truth_for(id);
    if (truth.empty()) {
      out.push_back({id, std::string(kAllPolicies), 0, v.frame_count, Polarity::kWeakNegative,
                     config.weak_negative_weight, "unassisted:" + id});
      continue;
    }
    for (const auto& t : truth) {
      out.push_back({id, t.policy_id, t.start_frame, t.end_frame, Polarity::kPositive,
                     config.positive_weight, "unassisted:" + id});
    }
  }
  return out;
}

std::vector<ScoreSeries> score_videos(const ScorerModel& model, const Corpus& corpus,
                                      std::span<const std::string> video_ids,
                                      const ScorerConfig& config,
                                      std::span<const std::string> policies) {
  std::vector<ScoreSeries> out;
  for (const auto& id : video_ids) {
    auto series = score_video(model, corpus.features_for(id), config, policies);
    std::move(series.begin(), series.end(), std::back_inserter(out));
  }
  return out;
}

std::vector<CalibrationResult> calibrate_policies(std::span<const ScoreSeries> series,
                                                  std::span<const TruthSegment> truth,
                                                  std::span<const std::string> policies,
                                                  double min_precision) {
  std::vector<CalibrationResult> out;
  for (const auto& policy : policies) {
    std::vector<ScoreSeries> mine;
    for (const auto& s : series) {
      if (s.policy_id == policy) mine.push_back(s);
    }
    try {
      out.push_back(calibrate_threshold(mine, truth, min_precision));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNoPositives) throw;
      CalibrationResult r;
      r.policy_id = policy;
      r.min_precision = min_precision;
      for (const auto& s : mine) r.calibration_set_size += static_cast<std::int64_t>(s.scores.size());
      out.push_back(r);
    }
    out.back().policy_id = policy;
  }
  return out;
}

HintBuild build_hints(std::span<const ScoreSeries> series, const Corpus& corpus,
                      std::span<const std::string> video_ids,
                      std::span<const CalibrationResult> calibrations,
                      const PolicyTaxonomy& taxonomy, const RankerConfig& ranker,
                      double gap_fraction, const std::map<std::string, int>& frequency) {
  validate(ranker);
  std::map<std::string, const CalibrationResult*> by_policy;
  for (const auto& c : calibrations) by_policy[c.policy_id] = &c;
  std::map<std::string, std::vector<const ScoreSeries*>> by_video;
  for (const auto& s : series) by_video[s.video_id].push_back(&s);

  HintBuild out;
  for (const auto& id : video_ids) {
    const VideoMeta& video = corpus.video(id);
    std::vector<ScoreSeries> mine;
    std::vector<RawSegment> segments;
    for (const ScoreSeries* s : by_video[id]) {
      mine.push_back(*s);
      auto it = by_policy.find(s->policy_id);
      if (it == by_policy.end() || !it->second->feasible) continue;
      auto raw = binarize(*s, it->second->threshold);
      auto merged = merge_segments(raw, video.frame_count, gap_fraction);
      segments.insert(segments.end(), merged.begin(), merged.end());
    }
    out.segments.insert(out.segments.end(), segments.begin(), segments.end());
    auto ranked = rank_segments(segments, taxonomy, ranker);
    HintPayload payload{id, build_v1_hints(mine, taxonomy, ranker, frequency),
                        top_n(ranked, ranker.top_n)};
    out.payloads.emplace(id, std::move(payload));
  }
  return out;
}

std::optional<double> segment_precision(std::span<const HintSegment> hints,
                                        std::span<const TruthSegment> truth) {
  if (hints.empty()) return std::nullopt;
  std::size_t hits = 0;
  for (const auto& h : hints) {
    const bool hit = std::any_of(truth.begin(), truth.end(), [&](const TruthSegment& t) {
      return t.video_id == h.video_id && t.policy_id == h.policy_id && t.span().overlaps(h.span());
    });
    if (hit) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(hints.size());
}

FeedbackStore store_from_outcomes(const ArmResult& arm, const Corpus& corpus,
                                  std::span<const std::string> video_ids,
                                  const std::map<std::string, HintPayload>& payloads,
                                  FeedbackStore store) {
  for (const auto& id : video_ids) store.register_video(corpus.video(id));
  for (const auto& id : video_ids) {
    auto it = payloads.find(id);
    if (it == payloads.end()) continue;
    for (const auto& h : it->second.v2) store.register_hint(h);
  }
  for (const auto* set : {&arm.generalist_a, &arm.generalist_b}) {
    for (const auto& o : *set) store.record_batch(o.annotations, o.hint_responses);
  }
  return store;
}

RetrainReport retrain_eval(std::span<const TrainingLabel> before_labels,
                           std::span<const TrainingLabel> added_labels,
                           std::span<const TrainingLabel> eval_labels, const Corpus& corpus,
                           const ScorerConfig& scorer, const TrainParams& train,
                           std::span<const std::string> policies) {
  std::vector<TrainingLabel> after_labels(before_labels.begin(), before_labels.end());
  after_labels.insert(after_labels.end(), added_labels.begin(), added_labels.end());

  const ScorerModel before = train_scorer(before_labels, corpus, scorer, train, policies);
  const ScorerModel after = train_scorer(after_labels, corpus, scorer, train, policies);
  TrainParams sampling = train;
  sampling.seed = mix_seed(train.seed, "eval");
  const auto eval_before = eval_aucpr(before, eval_labels, corpus, scorer, sampling);
  const auto eval_after = eval_aucpr(after, eval_labels, corpus, scorer, sampling);

  auto count = [](std::span<const TrainingLabel> labels, Polarity p, const std::string* policy) {
    return static_cast<int>(std::count_if(labels.begin(), labels.end(), [&](const TrainingLabel& l) {
      return l.polarity == p && (policy == nullptr || l.policy_id == *policy);
    }));
  };

  RetrainReport report;
  report.positives_before = count(before_labels, Polarity::kPositive, nullptr);
  report.positives_after = count(after_labels, Polarity::kPositive, nullptr);
  report.clean_negatives_before = count(before_labels, Polarity::kCleanNegative, nullptr);
  report.clean_negatives_after = count(after_labels, Polarity::kCleanNegative, nullptr);

  std::vector<double> deltas;
  for (const auto& b : eval_before) {
    auto a = std::find_if(eval_after.begin(), eval_after.end(),
                          [&](const AucprReport& r) { return r.policy_id == b.policy_id; });
    PolicyDelta d;
    d.policy_id = b.policy_id;
    d.before = b.aucpr;
    d.after = a == eval_after.end() ? std::nullopt : a->aucpr;
    if (d.before && d.after) {
      d.delta = *d.after - *d.before;
      deltas.push_back(*d.delta);
    }
    d.positives_before = count(before_labels, Polarity::kPositive, &b.policy_id);
    d.positives_after = count(after_labels, Polarity::kPositive, &b.policy_id);
    report.policies.push_back(std::move(d));
  }
  if (!deltas.empty()) {
    std::sort(deltas.begin(), deltas.end());
    const std::size_t n = deltas.size();
    report.median_delta = n % 2 == 1 ? deltas[n / 2] : (deltas[n / 2 - 1] + deltas[n / 2]) / 2.0;
    report.min_delta = deltas.front();
  }
  return report;
}

json to_json(const RetrainReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json policies = json::array();
  for (const auto& p : r.policies) {
    policies.push_back({{"policy_id", p.policy_id},
                        {"aucpr_before", opt(p.before)},
                        {"aucpr_after", opt(p.after)},
                        {"delta", opt(p.delta)},
                        {"positives_before", p.positives_before},
                        {"positives_after", p.positives_after}});
  }
  return {{"policies", policies},
          {"positives_before", r.positives_before},
          {"positives_after", r.positives_after},
          {"clean_negatives_before", r.clean_negatives_before},
          {"clean_negatives_after", r.clean_negatives_after},
          {"median_delta", opt(r.median_delta)},
          {"min_delta", opt(r.min_delta)}};
}

std::string format_retrain(const RetrainReport& r) {
  auto f = [](const std::optional<double>& v, const char* spec) {
    return v ? fmt::format(fmt::runtime(spec), *v) : std::string("undef");
  };
  std::string out = fmt::format("{:<28} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}\n", "Policy",
                                "AUCPR old", "AUCPR new", "delta", "pos old", "pos new", "pos +%");
  for (const auto& p : r.policies) {
    const std::string growth =
        p.positives_before == 0
            ? std::string("n/a")
            : fmt::format("{:+.1f}%", 100.0 * (p.positives_after - p.positives_before) /
                                          p.positives_before);
    out += fmt::format("{:<28} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}\n", p.policy_id,
                       f(p.before, "{:.4f}"), f(p.after, "{:.4f}"), f(p.delta, "{:+.4f}"),
                       p.positives_before, p.positives_after, growth);
  }
  out += fmt::format("positive labels: {} -> {}; clean negatives: {} -> {}\n", r.positives_before,
                     r.positives_after, r.clean_negatives_before, r.clean_negatives_after);
  out += fmt::format("median AUCPR delta: {}; min delta: {}\n", f(r.median_delta, "{:+.4f}"),
                     f(r.min_delta, "{:+.4f}"));
  return out;
}

LoopRun run_loop(const PipelineConfig& config, const PolicyTaxonomy& taxonomy, bool with_retrain) {
  if (auto errors = validate_config(config); !errors.empty()) {
    throw Error(ErrorCode::kValidation, errors.front());
  }
  LoopRun run;
  run.corpus = generate_corpus(config.corpus);
  run.splits = split_corpus(run.corpus, config.split, config.corpus.seed);
  const auto& policies = config.corpus.policies;

  run.seed_labels = unassisted_labels(run.corpus, run.splits.seed, config.export_labels);
  run.model = train_scorer(run.seed_labels, run.corpus, config.scorer, config.train, policies);

  const auto calib_series =
      score_videos(run.model, run.corpus, run.splits.calib, config.scorer, policies);
  const Corpus calib = select_videos(run.corpus, run.splits.calib);
  run.calibrations = calibrate_policies(calib_series, calib.truth, policies, config.min_precision);

  run.review_scores = score_videos(run.model, run.corpus, run.splits.review, config.scorer, policies);
  run.hints = build_hints(run.review_scores, run.corpus, run.splits.review, run.calibrations,
                          taxonomy, config.ranker, config.gap_fraction,
                          policy_frequency(calib.truth));

  const Corpus review = select_videos(run.corpus, run.splits.review);
  ExperimentConfig experiment = config.experiment;
  experiment.policies = policies;
  run.experiment = run_experiment(review, run.hints.payloads, experiment);
  for (const auto& arm : run.experiment.arms) {
    run.reports.push_back(evaluate_arm(run.experiment, arm, run.hints.payloads));
  }

  FeedbackStore store = store_from_outcomes(run.experiment.arm(config.export_arm), run.corpus,
                                            run.splits.review, run.hints.payloads);
  run.exported = export_training_labels(store.snapshot(), review.videos, config.export_labels);

  if (with_retrain) {
    const auto eval_labels = unassisted_labels(run.corpus, run.splits.eval, config.export_labels);
    run.retrain = retrain_eval(run.seed_labels, run.exported, eval_labels, run.corpus, config.scorer,
                               config.train, policies);
  }
  return run;
}

}  // namespace hintloop
