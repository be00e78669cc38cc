#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hintloop/evaluation.hpp"
#include "hintloop/feedbackstore.hpp"
#include "hintloop/ranker.hpp"
#include "hintloop/ratersim.hpp"
#include "hintloop/scoring.hpp"
#include "hintloop/segmenter.hpp"
#include "hintloop/synthdata.hpp"
#include "hintloop/taxonomy.hpp"

namespace hintloop {

/// Fractions of the corpus per role; the remainder is the review split.
struct SplitConfig {
  double seed_fraction = 0.05;  // historical labels for the first scorer
  double calib_fraction = 0.15;  // threshold calibration
  double eval_fraction = 0.4;   // held-out AUCPR labels, collected without hints
};

struct PipelineConfig {
  std::filesystem::path run_root = "runs";
  std::filesystem::path taxonomy_path;
  CorpusConfig corpus;
  SplitConfig split;
  ScorerConfig scorer;
  TrainParams train;
  RankerConfig ranker;
  double min_precision = kDefaultMinPrecision;
  double gap_fraction = kDefaultGapFraction;
  ExperimentConfig experiment;
  std::string export_arm = "v1_v2";
  ExportConfig export_labels;
};

/// Defaults: corpus policies = hint-enabled taxonomy ids; arms baseline, v1, v1_v2.
PipelineConfig default_pipeline_config(const PolicyTaxonomy& taxonomy);

/// Every problem found, not just the first.
std::vector<std::string> validate_config(const PipelineConfig& config);

nlohmann::json to_json(const PipelineConfig& config);
/// Fields missing from `doc` keep their defaults; relative paths resolve
/// against `base_dir`. Unknown top-level keys are rejected.
PipelineConfig pipeline_config_from_json(const nlohmann::json& doc, const PolicyTaxonomy* taxonomy,
                                         const std::filesystem::path& base_dir);
std::string config_hash(const PipelineConfig& config);

struct Splits {
  std::vector<std::string> seed;
  std::vector<std::string> calib;
  std::vector<std::string> review;
  std::vector<std::string> eval;
};

/// Stratified by violating / clean so every split sees violations.
Splits split_corpus(const Corpus& corpus, const SplitConfig& config, std::uint64_t seed);
nlohmann::json to_json(const Splits& s);
Splits splits_from_json(const nlohmann::json& j);

/// Labels as a comprehensive unassisted review would produce them: every truth
/// segment is a positive, every clean video a weak negative.
std::vector<TrainingLabel> unassisted_labels(const Corpus& corpus,
                                             std::span<const std::string> video_ids,
                                             const ExportConfig& config);

std::vector<ScoreSeries> score_videos(const ScorerModel& model, const Corpus& corpus,
                                      std::span<const std::string> video_ids,
                                      const ScorerConfig& config,
                                      std::span<const std::string> policies);

/// One result per policy; policies without calibration positives come back infeasible.
std::vector<CalibrationResult> calibrate_policies(std::span<const ScoreSeries> series,
                                                  std::span<const TruthSegment> truth,
                                                  std::span<const std::string> policies,
                                                  double min_precision);

struct HintBuild {
  std::map<std::string, HintPayload> payloads;
  std::vector<RawSegment> segments;  // merged, before top-N
};

HintBuild build_hints(std::span<const ScoreSeries> series, const Corpus& corpus,
                      std::span<const std::string> video_ids,
                      std::span<const CalibrationResult> calibrations,
                      const PolicyTaxonomy& taxonomy, const RankerConfig& ranker,
                      double gap_fraction, const std::map<std::string, int>& frequency);

/// Fraction of hints overlapping a truth segment of the same policy.
std::optional<double> segment_precision(std::span<const HintSegment> hints,
                                        std::span<const TruthSegment> truth);

/// Loads the generalist outcomes of one arm into a fresh store.
FeedbackStore store_from_outcomes(const ArmResult& arm, const Corpus& corpus,
                                  std::span<const std::string> video_ids,
                                  const std::map<std::string, HintPayload>& payloads,
                                  FeedbackStore store = {});

struct PolicyDelta {
  std::string policy_id;
  std::optional<double> before;
  std::optional<double> after;
  std::optional<double> delta;
  int positives_before = 0;
  int positives_after = 0;
};

struct RetrainReport {
  std::vector<PolicyDelta> policies;
  int positives_before = 0;
  int positives_after = 0;
  int clean_negatives_before = 0;
  int clean_negatives_after = 0;
  std::optional<double> median_delta;
  std::optional<double> min_delta;
};

RetrainReport retrain_eval(std::span<const TrainingLabel> before_labels,
                           std::span<const TrainingLabel> added_labels,
                           std::span<const TrainingLabel> eval_labels, const Corpus& corpus,
                           const ScorerConfig& scorer, const TrainParams& train,
                           std::span<const std::string> policies);

nlohmann::json to_json(const RetrainReport& r);
std::string format_retrain(const RetrainReport& r);

/// Everything one pass of the loop produces, kept in memory.
struct LoopRun {
  Corpus corpus;
  Splits splits;
  std::vector<TrainingLabel> seed_labels;
  ScorerModel model;
  std::vector<CalibrationResult> calibrations;
  std::vector<ScoreSeries> review_scores;
  HintBuild hints;
  ExperimentResult experiment;
  std::vector<ArmReport> reports;
  std::vector<TrainingLabel> exported;
  std::optional<RetrainReport> retrain;
};

/// synth -> train -> calibrate -> hints -> simulate -> evaluate -> export
/// (-> retrain-eval when `with_retrain`).
LoopRun run_loop(const PipelineConfig& config, const PolicyTaxonomy& taxonomy, bool with_retrain);

}  // namespace hintloop
