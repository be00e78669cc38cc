#include "hintloop/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <tuple>

#include <fmt/format.h>

#include "hintloop/error.hpp"
#include "hintloop/hash.hpp"
#include "hintloop/jsonl.hpp"

namespace hintloop {
namespace {

constexpr std::string_view kModelFormat = "hintloop.scorer.v1";

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Linear response of the window starting at `start`, padding with zero rows.
double window_response(const PolicyWeights& head, const FrameFeatureSeries& features,
                       FrameIndex start, int n) {
  const int dims = features.dims();
  const FrameIndex frames = features.frame_count();
  const double* x = features.values().data();
  const double* w = head.weights.data();
  double z = head.bias;
  const FrameIndex last = std::min<FrameIndex>(start + n, frames);
  for (FrameIndex f = start; f < last; ++f) {
    const double* row = x + f * dims;
    const double* wk = w + (f - start) * dims;
    for (int d = 0; d < dims; ++d) z += wk[d] * row[d];
  }
  return z;
}

bool is_negative_for(const WindowExample& ex, const std::string& policy) {
  switch (ex.polarity) {
    case Polarity::kWeakNegative: return true;
    case Polarity::kCleanNegative: return ex.policy_id == policy;
    case Polarity::kPositive: return ex.policy_id != policy;
  }
  return false;
}

void check_compatible(const ScorerModel& model, const FrameFeatureSeries& features,
                      const ScorerConfig& config) {
  if (features.dims() != model.dims || config.window_frames != model.window_frames) {
    throw Error(ErrorCode::kDimensionMismatch,
                fmt::format("{}: model expects dims={} window={}, got dims={} window={}",
                            features.video_id(), model.dims, model.window_frames, features.dims(),
                            config.window_frames));
  }
}

}  // namespace

void validate(const ScorerConfig& config) {
  if (config.window_frames < 1) {
    throw Error(ErrorCode::kValidation, "scorer: window_frames must be >= 1");
  }
}

void validate(const TrainParams& params) {
  auto fail = [](const char* msg) { throw Error(ErrorCode::kValidation, msg); };
  if (!(params.learning_rate > 0)) fail("train: learning_rate must be > 0");
  if (params.epochs < 0) fail("train: epochs must be >= 0");
  if (params.l2 < 0) fail("train: l2 must be >= 0");
  if (params.windows_per_segment < 1) fail("train: windows_per_segment must be >= 1");
  if (params.windows_per_weak_negative < 1) fail("train: windows_per_weak_negative must be >= 1");
  if (params.cross_policy_negative_weight < 0) {
    fail("train: cross_policy_negative_weight must be >= 0");
  }
}

double logistic(double x) noexcept {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

ScorerModel ScorerModel::zeros(int dims, int window_frames,
                               std::span<const std::string> policy_ids) {
  ScorerModel m;
  m.dims = dims;
  m.window_frames = window_frames;
  for (const auto& id : policy_ids) {
    m.policies[id] = PolicyWeights{std::vector<double>(m.feature_size(), 0.0), 0.0};
  }
  return m;
}

double ScorerModel::score(const std::string& policy_id, std::span<const double> window) const {
  auto it = policies.find(policy_id);
  if (it == policies.end()) return logistic(0.0);
  if (window.size() != it->second.weights.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                fmt::format("window of size {} for a model of size {}", window.size(),
                            it->second.weights.size()));
  }
  return logistic(dot(it->second.weights, window) + it->second.bias);
}

std::vector<double> aggregate_window(const FrameFeatureSeries& features, FrameIndex start, int n) {
  const FrameIndex frames = features.frame_count();
  if (start < 0 || start >= frames) {
    throw Error(ErrorCode::kOutOfRange, fmt::format("{}: window start {} outside [0, {})",
                                                    features.video_id(), start, frames));
  }
  if (n < 1) throw Error(ErrorCode::kValidation, "window size must be >= 1");
  const auto dims = static_cast<std::size_t>(features.dims());
  std::vector<double> out(static_cast<std::size_t>(n) * dims, 0.0);
  for (int k = 0; k < n && start + k < frames; ++k) {
    auto row = features.row(start + k);
    std::copy(row.begin(), row.end(), out.begin() + static_cast<std::ptrdiff_t>(k * dims));
  }
  return out;
}

std::vector<ScoreSeries> score_video(const ScorerModel& model, const FrameFeatureSeries& features,
                                     const ScorerConfig& config,
                                     std::span<const std::string> policy_filter) {
  validate(config);
  check_compatible(model, features, config);
  std::vector<std::string> ids;
  if (policy_filter.empty()) {
    for (const auto& [id, _] : model.policies) ids.push_back(id);
  } else {
    ids.assign(policy_filter.begin(), policy_filter.end());
  }
  const FrameIndex frames = features.frame_count();
  std::vector<ScoreSeries> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    // Policies without a trained head have no series.
    auto it = model.policies.find(id);
    if (it == model.policies.end()) continue;
    ScoreSeries series{features.video_id(), id, std::vector<double>(static_cast<std::size_t>(frames))};
    for (FrameIndex i = 0; i < frames; ++i) {
      series.scores[static_cast<std::size_t>(i)] =
          logistic(window_response(it->second, features, i, config.window_frames));
    }
    out.push_back(std::move(series));
  }
  return out;
}

std::vector<TrainingLabel> dedup_labels(std::span<const TrainingLabel> labels) {
  std::vector<TrainingLabel> out;
  std::set<std::tuple<std::string, std::string, FrameIndex, FrameIndex, Polarity>> seen;
  for (const auto& l : labels) {
    if (seen.emplace(l.video_id, l.policy_id, l.start_frame, l.end_frame, l.polarity).second) {
      out.push_back(l);
    }
  }
  return out;
}

std::vector<WindowExample> sample_windows(std::span<const TrainingLabel> labels,
                                          const Corpus& corpus, const ScorerConfig& config,
                                          const TrainParams& params) {
  std::vector<WindowExample> out;
  const FrameIndex n = config.window_frames;
  for (const auto& label : labels) {
    const VideoMeta& video = corpus.video(label.video_id);
    const FrameIndex lo = std::clamp<FrameIndex>(label.start_frame, 0, video.frame_count - 1);
    const FrameIndex end = std::clamp<FrameIndex>(label.end_frame, lo + 1, video.frame_count);
    auto emit = [&](FrameIndex start) {
      out.push_back({label.video_id, start, label.policy_id, label.polarity, label.weight});
    };
    if (label.polarity == Polarity::kWeakNegative) {
      std::mt19937_64 rng(mix_seed(
          params.seed, fmt::format("{}|{}|{}", label.video_id, label.start_frame, label.end_frame)));
      std::uniform_int_distribution<FrameIndex> pick(lo, end - 1);
      for (int k = 0; k < params.windows_per_weak_negative; ++k) emit(pick(rng));
      continue;
    }
    if (end - lo < n) {
      // Short label: centre one window on it.
      emit(std::clamp<FrameIndex>(lo - (n - (end - lo)) / 2, 0,
                                  std::max<FrameIndex>(0, video.frame_count - n)));
      continue;
    }
    // Keep the window inside the segment.
    const FrameIndex hi = std::max(lo, end - n);
    const FrameIndex count = std::min<FrameIndex>(params.windows_per_segment, hi - lo + 1);
    FrameIndex previous = -1;
    for (FrameIndex k = 0; k < count; ++k) {
      FrameIndex start = count == 1 ? lo : lo + (k * (hi - lo) + (count - 1) / 2) / (count - 1);
      if (start == previous) continue;
      previous = start;
      emit(start);
    }
  }
  return out;
}

ScorerModel train_scorer(std::span<const TrainingLabel> labels, const Corpus& corpus,
                         const ScorerConfig& config, const TrainParams& params,
                         std::span<const std::string> policy_ids) {
  validate(config);
  validate(params);
  if (corpus.features.empty()) {
    throw Error(ErrorCode::kValidation, "train: corpus has no features");
  }
  std::vector<TrainingLabel> used =
      params.dedup ? dedup_labels(labels) : std::vector<TrainingLabel>(labels.begin(), labels.end());

  ScorerModel model;
  model.dims = corpus.features.front().dims();
  model.window_frames = config.window_frames;
  model.epochs = params.epochs;

  std::set<std::string> videos;
  std::set<std::string> policies(policy_ids.begin(), policy_ids.end());
  for (const auto& l : used) {
    videos.insert(l.video_id);
    if (l.policy_id != kAllPolicies) policies.insert(l.policy_id);
  }
  model.training_videos.assign(videos.begin(), videos.end());

  const std::vector<WindowExample> examples = sample_windows(used, corpus, config, params);
  std::vector<std::vector<double>> windows;
  windows.reserve(examples.size());
  for (const auto& ex : examples) {
    const auto& f = corpus.features_for(ex.video_id);
    if (f.dims() != model.dims) {
      throw Error(ErrorCode::kDimensionMismatch,
                  fmt::format("{}: dims {} differ from {}", ex.video_id, f.dims(), model.dims));
    }
    windows.push_back(aggregate_window(f, ex.start, config.window_frames));
  }

  for (const auto& policy : policies) {
    LabelCounts counts;
    for (const auto& l : used) {
      if (l.polarity == Polarity::kWeakNegative) {
        ++counts.weak_negatives;
      } else if (l.policy_id == policy) {
        (l.polarity == Polarity::kPositive ? counts.positives : counts.clean_negatives) += 1;
      }
    }
    model.label_counts[policy] = counts;

    struct Item {
      std::size_t index;
      double target;
      double weight;
    };
    std::vector<Item> items;
    double pos_weight = 0;
    double neg_weight = 0;
    for (std::size_t i = 0; i < examples.size(); ++i) {
      const auto& ex = examples[i];
      if (ex.polarity == Polarity::kPositive && ex.policy_id == policy) {
        items.push_back({i, 1.0, ex.weight});
        pos_weight += ex.weight;
      } else if (is_negative_for(ex, policy)) {
        double w = ex.polarity == Polarity::kPositive ? ex.weight * params.cross_policy_negative_weight
                                                      : ex.weight;
        if (w <= 0) continue;
        items.push_back({i, 0.0, w});
        neg_weight += w;
      }
    }
    if (pos_weight <= 0 || neg_weight <= 0) {
      model.skipped_policies.push_back(policy);
      continue;
    }
    // Normalize so the mean example weight is 1 and (optionally) both classes
    // carry equal total weight.
    const double total = pos_weight + neg_weight;
    const double pos_scale = params.balance_classes ? total / (2 * pos_weight) : 1.0;
    const double neg_scale = params.balance_classes ? total / (2 * neg_weight) : 1.0;
    const double mean_scale = static_cast<double>(items.size()) / total;
    double mean_sq_norm = 0;
    for (auto& item : items) {
      item.weight *= (item.target > 0 ? pos_scale : neg_scale) * mean_scale;
      mean_sq_norm += dot(windows[item.index], windows[item.index]);
    }
    mean_sq_norm = std::max(mean_sq_norm / static_cast<double>(items.size()), 1e-12);

    PolicyWeights head{std::vector<double>(model.feature_size(), 0.0), 0.0};
    const double eta = params.learning_rate / mean_sq_norm;
    const double eta_bias = params.learning_rate / std::sqrt(mean_sq_norm);
    // Averaged SGD: the returned head is the mean iterate of the last epoch
    // (all epochs when there is only one), which tames the large steps that
    // rare, heavily up-weighted positives cause.
    PolicyWeights avg{std::vector<double>(model.feature_size(), 0.0), 0.0};
    std::int64_t averaged = 0;
    std::mt19937_64 rng(mix_seed(params.seed, policy));
    for (int epoch = 0; epoch < params.epochs; ++epoch) {
      std::shuffle(items.begin(), items.end(), rng);
      const bool averaging = epoch + 1 >= std::max(params.epochs / 2, 1);
      for (const auto& item : items) {
        const auto& x = windows[item.index];
        const double p = logistic(dot(head.weights, x) + head.bias);
        const double g = (p - item.target) * item.weight;
        for (std::size_t d = 0; d < x.size(); ++d) {
          head.weights[d] -= eta * (g * x[d] + params.l2 * head.weights[d]);
        }
        head.bias -= eta_bias * g;
        if (averaging) {
          ++averaged;
          const double k = 1.0 / static_cast<double>(averaged);
          for (std::size_t d = 0; d < x.size(); ++d) avg.weights[d] += (head.weights[d] - avg.weights[d]) * k;
          avg.bias += (head.bias - avg.bias) * k;
        }
      }
    }
    model.policies[policy] = averaged > 0 ? std::move(avg) : std::move(head);
  }
  return model;
}

std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "average_precision: scores/labels size mismatch");
  }
  const auto total_pos = std::count_if(labels.begin(), labels.end(), [](int l) { return l != 0; });
  if (total_pos == 0) return std::nullopt;
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double ap = 0;
  long tp = 0;
  long fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    long group_pos = 0;
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] != 0 ? group_pos : fp) += 1;
      ++j;
    }
    tp += group_pos;
    if (group_pos > 0) {
      ap += static_cast<double>(group_pos) / static_cast<double>(total_pos) *
            (static_cast<double>(tp) / static_cast<double>(tp + fp));
    }
    i = j;
  }
  return ap;
}

std::vector<AucprReport> eval_aucpr(const ScorerModel& model,
                                    std::span<const TrainingLabel> labels, const Corpus& corpus,
                                    const ScorerConfig& config, const TrainParams& sampling) {
  for (const auto& l : labels) {
    if (std::binary_search(model.training_videos.begin(), model.training_videos.end(),
                           l.video_id)) {
      throw Error(ErrorCode::kContract,
                  fmt::format("eval label on {} overlaps the training set", l.video_id));
    }
  }
  const std::vector<TrainingLabel> used = dedup_labels(labels);
  const std::vector<WindowExample> examples = sample_windows(used, corpus, config, sampling);

  std::set<std::string> policies;
  for (const auto& [id, _] : model.policies) policies.insert(id);
  for (const auto& l : used) {
    if (l.policy_id != kAllPolicies) policies.insert(l.policy_id);
  }

  std::vector<std::vector<double>> windows;
  windows.reserve(examples.size());
  for (const auto& ex : examples) {
    const auto& f = corpus.features_for(ex.video_id);
    check_compatible(model, f, config);
    windows.push_back(aggregate_window(f, ex.start, config.window_frames));
  }

  std::vector<AucprReport> out;
  for (const auto& policy : policies) {
    std::vector<double> scores;
    std::vector<int> truth;
    AucprReport report{policy, std::nullopt, 0, 0};
    for (std::size_t i = 0; i < examples.size(); ++i) {
      const auto& ex = examples[i];
      int label = -1;
      if (ex.polarity == Polarity::kPositive && ex.policy_id == policy) {
        label = 1;
      } else if (is_negative_for(ex, policy)) {
        label = 0;
      }
      if (label < 0) continue;
      scores.push_back(model.score(policy, windows[i]));
      truth.push_back(label);
      (label == 1 ? report.positive_count : report.negative_count) += 1;
    }
    report.aucpr = average_precision(scores, truth);
    out.push_back(std::move(report));
  }
  return out;
}

nlohmann::json to_json(const ScorerModel& model) {
  nlohmann::json heads = nlohmann::json::object();
  for (const auto& [id, head] : model.policies) {
    heads[id] = {{"weights", head.weights}, {"bias", head.bias}};
  }
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [id, c] : model.label_counts) {
    counts[id] = {{"positives", c.positives},
                  {"clean_negatives", c.clean_negatives},
                  {"weak_negatives", c.weak_negatives}};
  }
  return {{"format", kModelFormat},
          {"dims", model.dims},
          {"window_frames", model.window_frames},
          {"policies", heads},
          {"metadata",
           {{"epochs", model.epochs},
            {"label_counts", counts},
            {"skipped_policies", model.skipped_policies},
            {"training_videos", model.training_videos}}}};
}

ScorerModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kModelFormat) {
      throw Error(ErrorCode::kParse, "unsupported scorer checkpoint format");
    }
    ScorerModel m;
    m.dims = j.at("dims").get<int>();
    m.window_frames = j.at("window_frames").get<int>();
    for (const auto& [id, head] : j.at("policies").items()) {
      PolicyWeights w{head.at("weights").get<std::vector<double>>(), head.at("bias").get<double>()};
      if (w.weights.size() != m.feature_size()) {
        throw Error(ErrorCode::kDimensionMismatch,
                    fmt::format("checkpoint policy {}: {} weights, expected {}", id,
                                w.weights.size(), m.feature_size()));
      }
      m.policies.emplace(id, std::move(w));
    }
    const auto& meta = j.at("metadata");
    m.epochs = meta.at("epochs").get<int>();
    for (const auto& [id, c] : meta.at("label_counts").items()) {
      m.label_counts[id] = {c.at("positives").get<int>(), c.at("clean_negatives").get<int>(),
                            c.at("weak_negatives").get<int>()};
    }
    m.skipped_policies = meta.at("skipped_policies").get<std::vector<std::string>>();
    m.training_videos = meta.at("training_videos").get<std::vector<std::string>>();
    std::sort(m.training_videos.begin(), m.training_videos.end());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, fmt::format("scorer checkpoint: {}", e.what()));
  }
}

void save_model(const ScorerModel& model, const std::filesystem::path& path) {
  write_text(path, to_json(model).dump() + "\n");
}

ScorerModel load_model(const std::filesystem::path& path) { return model_from_json(read_json(path)); }

nlohmann::json to_json(const ScoreSeries& s) {
  return {{"video_id", s.video_id}, {"policy_id", s.policy_id}, {"scores", s.scores}};
}

ScoreSeries score_series_from_json(const nlohmann::json& j) {
  ScoreSeries s{j.at("video_id").get<std::string>(), j.at("policy_id").get<std::string>(),
                j.at("scores").get<std::vector<double>>()};
  for (double v : s.scores) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw Error(ErrorCode::kValidation, fmt::format("{}/{}: score outside [0,1]", s.video_id,
                                                      s.policy_id));
    }
  }
  return s;
}

}  // namespace hintloop
