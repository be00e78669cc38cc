#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace hintloop {

using FrameIndex = std::int64_t;

/// Half-open frame interval [start, end).
struct FrameSpan {
  FrameIndex start = 0;
  FrameIndex end = 0;

  FrameIndex length() const noexcept { return end - start; }
  bool empty() const noexcept { return end <= start; }
  bool contains(FrameIndex f) const noexcept { return f >= start && f < end; }
  FrameIndex overlap(const FrameSpan& o) const noexcept;
  bool overlaps(const FrameSpan& o) const noexcept { return overlap(o) > 0; }

  friend bool operator==(const FrameSpan&, const FrameSpan&) = default;
};

struct VideoMeta {
  std::string video_id;
  FrameIndex frame_count = 1;
  double fps = 1.0;

  friend bool operator==(const VideoMeta&, const VideoMeta&) = default;
};

struct TruthSegment {
  std::string video_id;
  std::string policy_id;
  FrameIndex start_frame = 0;
  FrameIndex end_frame = 1;

  FrameSpan span() const noexcept { return {start_frame, end_frame}; }
  friend bool operator==(const TruthSegment&, const TruthSegment&) = default;
};

/// frame_count x dims row-major matrix of per-frame features.
class FrameFeatureSeries {
 public:
  FrameFeatureSeries() = default;
  FrameFeatureSeries(std::string video_id, int dims, std::vector<double> values);

  const std::string& video_id() const noexcept { return video_id_; }
  int dims() const noexcept { return dims_; }
  FrameIndex frame_count() const noexcept {
    return dims_ == 0 ? 0 : static_cast<FrameIndex>(values_.size()) / dims_;
  }
  std::span<const double> row(FrameIndex frame) const;
  std::span<double> row(FrameIndex frame);
  const std::vector<double>& values() const noexcept { return values_; }

  friend bool operator==(const FrameFeatureSeries&, const FrameFeatureSeries&) = default;

 private:
  std::string video_id_;
  int dims_ = 0;
  std::vector<double> values_;
};

struct CorpusConfig {
  int n_videos = 100;
  FrameIndex min_frames = 200;
  FrameIndex max_frames = 600;
  double fps = 1.0;
  double violating_fraction = 0.15;
  std::vector<std::string> policies;
  // Relative segment frequency per policy; empty means 1/sqrt(rank + 1).
  std::vector<double> policy_weights;
  int min_segments = 1;
  int max_segments = 2;
  FrameIndex min_segment_frames = 20;
  FrameIndex max_segment_frames = 60;
  int dims = 16;
  double signal_shift = 1.0;
  double noise_sigma = 1.0;
  // Seeds the per-policy feature signatures. Corpora sharing it share the
  // same "world", so a scorer trained on one transfers to another.
  std::uint64_t signature_seed = 0x5eedULL;
  std::uint64_t seed = 7;
  std::string id_prefix = "vid";
};

void validate(const CorpusConfig& config);

struct Corpus {
  std::vector<VideoMeta> videos;
  std::vector<TruthSegment> truth;
  std::vector<FrameFeatureSeries> features;

  const VideoMeta& video(std::string_view video_id) const;
  const FrameFeatureSeries& features_for(std::string_view video_id) const;
  std::vector<TruthSegment> truth_for(std::string_view video_id) const;
  bool has_video(std::string_view video_id) const;

  /// Rebuilds the id lookup; call after mutating `videos`/`features`.
  void reindex();

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

/// Mean-shift direction of a policy in feature space (length == signal_shift).
std::vector<double> policy_signature(const CorpusConfig& config, std::string_view policy_id);

Corpus generate_corpus(const CorpusConfig& config);

/// Sub-corpus restricted to the given ids (order follows `video_ids`).
Corpus select_videos(const Corpus& corpus, std::span<const std::string> video_ids);

nlohmann::json to_json(const VideoMeta& v);
nlohmann::json to_json(const TruthSegment& t);
nlohmann::json to_json(const FrameFeatureSeries& f);
VideoMeta video_from_json(const nlohmann::json& j);
TruthSegment truth_from_json(const nlohmann::json& j);
FrameFeatureSeries features_from_json(const nlohmann::json& j);

/// Writes videos.jsonl, truth.jsonl and features.jsonl into `dir`.
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

}  // namespace hintloop
