#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hintloop/labels.hpp"
#include "hintloop/ranker.hpp"
#include "hintloop/synthdata.hpp"

namespace hintloop {

enum class AnnotationOrigin { kOrganic, kFromAcceptedHint };
enum class Verdict { kAccepted, kRejected };

std::string_view to_string(AnnotationOrigin origin);
std::string_view to_string(Verdict verdict);

struct Annotation {
  std::string annotation_id;
  std::string video_id;
  std::string rater_id;
  std::string policy_id;
  FrameIndex start_frame = 0;
  FrameIndex end_frame = 1;
  AnnotationOrigin origin = AnnotationOrigin::kOrganic;
  std::string hint_id;  // set when origin == kFromAcceptedHint
  std::int64_t timestamp = 0;

  FrameSpan span() const noexcept { return {start_frame, end_frame}; }
  friend bool operator==(const Annotation&, const Annotation&) = default;
};

struct HintResponse {
  std::string hint_id;
  std::string rater_id;
  Verdict verdict = Verdict::kAccepted;
  std::int64_t timestamp = 0;
  friend bool operator==(const HintResponse&, const HintResponse&) = default;
};

nlohmann::json to_json(const Annotation& a);
Annotation annotation_from_json(const nlohmann::json& j);
nlohmann::json to_json(const HintResponse& r);
HintResponse hint_response_from_json(const nlohmann::json& j);

/// Everything the store holds, in append order.
struct StoreContents {
  std::vector<VideoMeta> videos;
  std::vector<HintSegment> hints;
  std::vector<Annotation> annotations;
  std::vector<HintResponse> responses;

  const HintSegment* find_hint(std::string_view hint_id) const;
  const VideoMeta* find_video(std::string_view video_id) const;
};

nlohmann::json to_json(const StoreContents& contents);

/// Append-only feedback log. Every accepted write is appended as one JSONL
/// record (when backed by a file) before it becomes visible to readers.
/// Single writer, many readers.
class FeedbackStore {
 public:
  FeedbackStore();
  ~FeedbackStore();
  FeedbackStore(FeedbackStore&&) noexcept;
  FeedbackStore& operator=(FeedbackStore&&) noexcept;

  /// Replays `log_path` if it exists, then appends to it. With
  /// snapshot_every > 0 a JSON snapshot is rewritten every that many records.
  static FeedbackStore open(const std::filesystem::path& log_path, int snapshot_every = 0);

  /// Registration is idempotent for identical records; a conflicting
  /// re-registration is a duplicate error.
  void register_video(const VideoMeta& video);
  void register_hint(const HintSegment& hint);

  void record_annotation(const Annotation& annotation);
  void record_hint_response(const HintResponse& response);

  /// Validates every record first; either all are appended or none.
  void record_batch(std::span<const Annotation> annotations,
                    std::span<const HintResponse> responses);

  StoreContents snapshot() const;
  std::size_t record_count() const;
  std::vector<Annotation> annotations_for(std::string_view video_id) const;
  bool has_hint(std::string_view hint_id) const;
  std::optional<HintSegment> hint(std::string_view hint_id) const;

  void write_snapshot(const std::filesystem::path& path) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct ExportConfig {
  double positive_weight = 1.0;
  double clean_negative_weight = 1.0;
  double weak_negative_weight = 0.3;
};

/// positives: every annotation plus every accepted (hint, rater) response not
/// already mirrored by a from-accepted-hint annotation of that rater;
/// clean negatives: every rejected response (policy-specific, hint span);
/// weak negatives: every `videos` entry with no annotation from any rater.
std::vector<TrainingLabel> export_training_labels(const StoreContents& store,
                                                  std::span<const VideoMeta> videos,
                                                  const ExportConfig& config = {});

}  // namespace hintloop
