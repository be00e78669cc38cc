#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hintloop/labels.hpp"
#include "hintloop/synthdata.hpp"

namespace hintloop {

enum class Aggregation { kFlatConcat };

struct ScorerConfig {
  int window_frames = 16;
  Aggregation aggregation = Aggregation::kFlatConcat;
};

void validate(const ScorerConfig& config);

/// scores[i] is the model score of the window starting at frame i.
struct ScoreSeries {
  std::string video_id;
  std::string policy_id;
  std::vector<double> scores;

  friend bool operator==(const ScoreSeries&, const ScoreSeries&) = default;
};

struct PolicyWeights {
  std::vector<double> weights;  // window_frames * dims
  double bias = 0.0;
};

struct LabelCounts {
  int positives = 0;
  int clean_negatives = 0;
  int weak_negatives = 0;

  friend bool operator==(const LabelCounts&, const LabelCounts&) = default;
};

struct ScorerModel {
  int dims = 0;
  int window_frames = 0;
  std::map<std::string, PolicyWeights> policies;

  int epochs = 0;
  std::map<std::string, LabelCounts> label_counts;
  std::vector<std::string> skipped_policies;
  std::vector<std::string> training_videos;  // sorted

  /// Zero-weight model covering `policy_ids`.
  static ScorerModel zeros(int dims, int window_frames, std::span<const std::string> policy_ids);

  std::size_t feature_size() const noexcept {
    return static_cast<std::size_t>(dims) * static_cast<std::size_t>(window_frames);
  }
  double score(const std::string& policy_id, std::span<const double> window) const;
};

double logistic(double x) noexcept;

/// Rows [start, start + n) concatenated; rows past the last frame are zeros.
std::vector<double> aggregate_window(const FrameFeatureSeries& features, FrameIndex start, int n);

/// One series per model policy, restricted to `policy_filter` when given.
/// Policies the model has no head for are skipped.
std::vector<ScoreSeries> score_video(const ScorerModel& model, const FrameFeatureSeries& features,
                                     const ScorerConfig& config,
                                     std::span<const std::string> policy_filter = {});

struct TrainParams {
  double learning_rate = 0.05;
  int epochs = 8;
  std::uint64_t seed = 1;
  double l2 = 1e-4;
  int windows_per_segment = 8;
  int windows_per_weak_negative = 8;
  // Positives of other policies act as negatives at this weight.
  double cross_policy_negative_weight = 0.3;
  bool dedup = true;
  bool balance_classes = false;
};

void validate(const TrainParams& params);

/// A labeled window: the example unit for both training and evaluation.
struct WindowExample {
  std::string video_id;
  FrameIndex start = 0;
  std::string policy_id;  // kAllPolicies for weak negatives
  Polarity polarity = Polarity::kPositive;
  double weight = 1.0;
};

/// Deterministic window sampling from labels; segment labels yield evenly
/// spaced windows, whole-video weak negatives yield seeded random windows.
std::vector<WindowExample> sample_windows(std::span<const TrainingLabel> labels,
                                          const Corpus& corpus, const ScorerConfig& config,
                                          const TrainParams& params);

std::vector<TrainingLabel> dedup_labels(std::span<const TrainingLabel> labels);

/// Trains one logistic-linear head per policy seen in `labels` (plus any in
/// `policy_ids`). Policies without a positive or a negative are skipped and
/// listed in `skipped_policies`.
ScorerModel train_scorer(std::span<const TrainingLabel> labels, const Corpus& corpus,
                         const ScorerConfig& config, const TrainParams& params,
                         std::span<const std::string> policy_ids = {});

struct AucprReport {
  std::string policy_id;
  std::optional<double> aucpr;  // nullopt when there are no positives
  int positive_count = 0;
  int negative_count = 0;
};

/// Step-curve area under precision/recall (average precision). Tied scores
/// enter the curve together. nullopt when `labels` has no positive.
std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const int> labels);

/// Evaluates every model policy against `labels`, which must not share
/// videos with the model's training set.
std::vector<AucprReport> eval_aucpr(const ScorerModel& model,
                                    std::span<const TrainingLabel> labels, const Corpus& corpus,
                                    const ScorerConfig& config, const TrainParams& sampling);

nlohmann::json to_json(const ScorerModel& model);
ScorerModel model_from_json(const nlohmann::json& j);
void save_model(const ScorerModel& model, const std::filesystem::path& path);
ScorerModel load_model(const std::filesystem::path& path);

nlohmann::json to_json(const ScoreSeries& s);
ScoreSeries score_series_from_json(const nlohmann::json& j);

}  // namespace hintloop
