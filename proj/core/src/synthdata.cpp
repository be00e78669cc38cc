#include "hintloop/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "hintloop/error.hpp"
#include "hintloop/hash.hpp"
#include "hintloop/jsonl.hpp"

namespace hintloop {
namespace {

// Features are stored at fixed decimal precision so JSONL round trips are exact
// and files stay compact.
constexpr double kFeatureQuantum = 1e5;

double quantize(double x) { return std::round(x * kFeatureQuantum) / kFeatureQuantum; }

std::string video_id_for(const CorpusConfig& config, int index, int n_videos) {
  int width = std::max(4, static_cast<int>(std::to_string(n_videos).size()));
  return fmt::format("{}-{:0{}d}", config.id_prefix, index, width);
}

std::vector<double> effective_weights(const CorpusConfig& config) {
  if (!config.policy_weights.empty()) return config.policy_weights;
  std::vector<double> w(config.policies.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 1.0 / std::sqrt(static_cast<double>(i + 1));
  return w;
}

// Non-overlapping segments for one violating video; at least one is always placed.
std::vector<TruthSegment> place_segments(const CorpusConfig& config, const std::string& video_id,
                                         FrameIndex frame_count, std::mt19937_64& rng,
                                         std::discrete_distribution<std::size_t>& pick_policy) {
  std::uniform_int_distribution<int> count_dist(config.min_segments, config.max_segments);
  const int wanted = count_dist(rng);
  std::vector<TruthSegment> out;
  std::vector<FrameSpan> taken;
  for (int s = 0; s < wanted; ++s) {
    constexpr int kAttempts = 64;
    for (int attempt = 0; attempt < kAttempts; ++attempt) {
      FrameIndex max_len = std::min(config.max_segment_frames, frame_count);
      FrameIndex min_len = std::min(config.min_segment_frames, max_len);
      std::uniform_int_distribution<FrameIndex> len_dist(min_len, max_len);
      FrameIndex len = len_dist(rng);
      std::uniform_int_distribution<FrameIndex> start_dist(0, frame_count - len);
      FrameSpan span{start_dist(rng), 0};
      span.end = span.start + len;
      bool clash = std::any_of(taken.begin(), taken.end(),
                               [&](const FrameSpan& t) { return t.overlaps(span); });
      if (clash) continue;
      taken.push_back(span);
      out.push_back({video_id, config.policies[pick_policy(rng)], span.start, span.end});
      break;
    }
  }
  std::sort(out.begin(), out.end(), [](const TruthSegment& a, const TruthSegment& b) {
    return a.start_frame < b.start_frame;
  });
  return out;
}

}  // namespace

FrameIndex FrameSpan::overlap(const FrameSpan& o) const noexcept {
  return std::max<FrameIndex>(0, std::min(end, o.end) - std::max(start, o.start));
}

FrameFeatureSeries::FrameFeatureSeries(std::string video_id, int dims, std::vector<double> values)
    : video_id_(std::move(video_id)), dims_(dims), values_(std::move(values)) {
  if (dims_ <= 0) {
    throw Error(ErrorCode::kValidation, fmt::format("{}: dims must be positive", video_id_));
  }
  if (values_.empty() || values_.size() % static_cast<std::size_t>(dims_) != 0) {
    throw Error(ErrorCode::kValidation,
                fmt::format("{}: {} values is not a positive multiple of dims {}", video_id_,
                            values_.size(), dims_));
  }
  for (double v : values_) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::kValidation, fmt::format("{}: non-finite feature value", video_id_));
    }
  }
}

std::span<const double> FrameFeatureSeries::row(FrameIndex frame) const {
  if (frame < 0 || frame >= frame_count()) {
    throw Error(ErrorCode::kOutOfRange,
                fmt::format("{}: frame {} outside [0, {})", video_id_, frame, frame_count()));
  }
  return {values_.data() + frame * dims_, static_cast<std::size_t>(dims_)};
}

std::span<double> FrameFeatureSeries::row(FrameIndex frame) {
  if (frame < 0 || frame >= frame_count()) {
    throw Error(ErrorCode::kOutOfRange,
                fmt::format("{}: frame {} outside [0, {})", video_id_, frame, frame_count()));
  }
  return {values_.data() + frame * dims_, static_cast<std::size_t>(dims_)};
}

void validate(const CorpusConfig& config) {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kValidation, msg); };
  if (config.n_videos < 0) fail("corpus: n_videos must be >= 0");
  if (config.min_frames < 1 || config.max_frames < config.min_frames) {
    fail("corpus: need 1 <= min_frames <= max_frames");
  }
  if (!(config.fps > 0)) fail("corpus: fps must be > 0");
  if (!(config.violating_fraction >= 0.0 && config.violating_fraction <= 1.0)) {
    fail("corpus: violating_fraction must be in [0, 1]");
  }
  if (config.violating_fraction > 0 && config.policies.empty()) {
    fail("corpus: empty policy list with violating_fraction > 0");
  }
  if (!config.policy_weights.empty() && config.policy_weights.size() != config.policies.size()) {
    fail("corpus: policy_weights must match policies");
  }
  if (config.min_segments < 1 || config.max_segments < config.min_segments) {
    fail("corpus: need 1 <= min_segments <= max_segments");
  }
  if (config.min_segment_frames < 1 || config.max_segment_frames < config.min_segment_frames) {
    fail("corpus: need 1 <= min_segment_frames <= max_segment_frames");
  }
  if (config.dims < 1) fail("corpus: dims must be >= 1");
  if (!(config.noise_sigma >= 0)) fail("corpus: noise_sigma must be >= 0");
}

std::vector<double> policy_signature(const CorpusConfig& config, std::string_view policy_id) {
  std::mt19937_64 rng(mix_seed(config.signature_seed, policy_id));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> dir(static_cast<std::size_t>(config.dims));
  double norm = 0;
  do {
    norm = 0;
    for (auto& d : dir) {
      d = normal(rng);
      norm += d * d;
    }
  } while (norm == 0);
  norm = std::sqrt(norm);
  for (auto& d : dir) d = d / norm * config.signal_shift;
  return dir;
}

Corpus generate_corpus(const CorpusConfig& config) {
  validate(config);
  Corpus corpus;
  const int n = config.n_videos;
  const auto n_violating =
      static_cast<int>(std::llround(static_cast<double>(n) * config.violating_fraction));

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 pick_rng(mix_seed(config.seed, "violating"));
  std::shuffle(order.begin(), order.end(), pick_rng);
  std::vector<bool> violating(static_cast<std::size_t>(n), false);
  for (int i = 0; i < n_violating; ++i) violating[static_cast<std::size_t>(order[i])] = true;

  std::vector<std::vector<double>> signatures;
  for (const auto& p : config.policies) signatures.push_back(policy_signature(config, p));
  std::vector<double> weights = effective_weights(config);

  for (int i = 0; i < n; ++i) {
    std::mt19937_64 rng(mix_seed(config.seed, static_cast<std::uint64_t>(i)));
    std::uniform_int_distribution<FrameIndex> frames_dist(config.min_frames, config.max_frames);
    VideoMeta meta{video_id_for(config, i, n), frames_dist(rng), config.fps};

    std::vector<TruthSegment> segments;
    if (violating[static_cast<std::size_t>(i)]) {
      std::discrete_distribution<std::size_t> pick_policy(weights.begin(), weights.end());
      segments = place_segments(config, meta.video_id, meta.frame_count, rng, pick_policy);
    }

    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> values(static_cast<std::size_t>(meta.frame_count * config.dims));
    for (auto& v : values) v = config.noise_sigma * noise(rng);
    for (const auto& seg : segments) {
      auto pidx = static_cast<std::size_t>(
          std::find(config.policies.begin(), config.policies.end(), seg.policy_id) -
          config.policies.begin());
      const auto& sig = signatures[pidx];
      for (FrameIndex f = seg.start_frame; f < seg.end_frame; ++f) {
        for (int d = 0; d < config.dims; ++d) {
          values[static_cast<std::size_t>(f * config.dims + d)] += sig[static_cast<std::size_t>(d)];
        }
      }
    }
    for (auto& v : values) v = quantize(v);

    corpus.features.emplace_back(meta.video_id, config.dims, std::move(values));
    corpus.truth.insert(corpus.truth.end(), segments.begin(), segments.end());
    corpus.videos.push_back(std::move(meta));
  }
  corpus.reindex();
  return corpus;
}

void Corpus::reindex() {
  index_.clear();
  for (std::size_t i = 0; i < videos.size(); ++i) {
    if (!index_.emplace(videos[i].video_id, i).second) {
      throw Error(ErrorCode::kDuplicate, fmt::format("duplicate video id {}", videos[i].video_id));
    }
  }
  if (!features.empty() && features.size() != videos.size()) {
    throw Error(ErrorCode::kValidation, "corpus: features do not match videos");
  }
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].video_id() != videos[i].video_id ||
        features[i].frame_count() != videos[i].frame_count) {
      throw Error(ErrorCode::kValidation,
                  fmt::format("corpus: features for {} do not match video metadata",
                              videos[i].video_id));
    }
  }
}

bool Corpus::has_video(std::string_view video_id) const {
  return index_.find(std::string(video_id)) != index_.end();
}

const VideoMeta& Corpus::video(std::string_view video_id) const {
  auto it = index_.find(std::string(video_id));
  if (it == index_.end()) {
    throw Error(ErrorCode::kNotFound, fmt::format("unknown video {}", video_id));
  }
  return videos[it->second];
}

const FrameFeatureSeries& Corpus::features_for(std::string_view video_id) const {
  auto it = index_.find(std::string(video_id));
  if (it == index_.end() || it->second >= features.size()) {
    throw Error(ErrorCode::kNotFound, fmt::format("no features for video {}", video_id));
  }
  return features[it->second];
}

std::vector<TruthSegment> Corpus::truth_for(std::string_view video_id) const {
  std::vector<TruthSegment> out;
  for (const auto& t : truth) {
    if (t.video_id == video_id) out.push_back(t);
  }
  return out;
}

Corpus select_videos(const Corpus& corpus, std::span<const std::string> video_ids) {
  Corpus out;
  for (const auto& id : video_ids) {
    out.videos.push_back(corpus.video(id));
    if (!corpus.features.empty()) out.features.push_back(corpus.features_for(id));
  }
  std::unordered_map<std::string, bool> wanted;
  for (const auto& id : video_ids) wanted[id] = true;
  for (const auto& t : corpus.truth) {
    if (wanted.count(t.video_id)) out.truth.push_back(t);
  }
  out.reindex();
  return out;
}

nlohmann::json to_json(const VideoMeta& v) {
  return {{"video_id", v.video_id}, {"frame_count", v.frame_count}, {"fps", v.fps}};
}

nlohmann::json to_json(const TruthSegment& t) {
  return {{"video_id", t.video_id},
          {"policy_id", t.policy_id},
          {"start_frame", t.start_frame},
          {"end_frame", t.end_frame}};
}

nlohmann::json to_json(const FrameFeatureSeries& f) {
  return {{"video_id", f.video_id()}, {"dims", f.dims()}, {"values", f.values()}};
}

VideoMeta video_from_json(const nlohmann::json& j) {
  VideoMeta v{j.at("video_id").get<std::string>(), j.at("frame_count").get<FrameIndex>(),
              j.at("fps").get<double>()};
  if (v.frame_count < 1 || !(v.fps > 0)) {
    throw Error(ErrorCode::kValidation, fmt::format("video {}: invalid metadata", v.video_id));
  }
  return v;
}

TruthSegment truth_from_json(const nlohmann::json& j) {
  TruthSegment t{j.at("video_id").get<std::string>(), j.at("policy_id").get<std::string>(),
                 j.at("start_frame").get<FrameIndex>(), j.at("end_frame").get<FrameIndex>()};
  if (t.start_frame < 0 || t.end_frame <= t.start_frame) {
    throw Error(ErrorCode::kValidation, fmt::format("truth segment on {}: bad span", t.video_id));
  }
  return t;
}

FrameFeatureSeries features_from_json(const nlohmann::json& j) {
  return {j.at("video_id").get<std::string>(), j.at("dims").get<int>(),
          j.at("values").get<std::vector<double>>()};
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<nlohmann::json> rows;
  for (const auto& v : corpus.videos) rows.push_back(to_json(v));
  write_jsonl(dir / "videos.jsonl", rows);
  rows.clear();
  for (const auto& t : corpus.truth) rows.push_back(to_json(t));
  write_jsonl(dir / "truth.jsonl", rows);
  rows.clear();
  for (const auto& f : corpus.features) rows.push_back(to_json(f));
  write_jsonl(dir / "features.jsonl", rows);
}

Corpus load_corpus(const std::filesystem::path& dir) {
  Corpus corpus;
  try {
    for (const auto& j : read_jsonl(dir / "videos.jsonl")) corpus.videos.push_back(video_from_json(j));
    for (const auto& j : read_jsonl(dir / "truth.jsonl")) corpus.truth.push_back(truth_from_json(j));
    for (const auto& j : read_jsonl(dir / "features.jsonl")) {
      corpus.features.push_back(features_from_json(j));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, fmt::format("corpus {}: {}", dir.string(), e.what()));
  }
  corpus.reindex();
  for (const auto& t : corpus.truth) {
    const auto& v = corpus.video(t.video_id);
    if (t.end_frame > v.frame_count) {
      throw Error(ErrorCode::kValidation,
                  fmt::format("truth segment exceeds video {} bounds", t.video_id));
    }
  }
  return corpus;
}

}  // namespace hintloop
