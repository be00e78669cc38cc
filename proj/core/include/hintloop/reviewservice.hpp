#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hintloop/feedbackstore.hpp"
#include "hintloop/ranker.hpp"
#include "hintloop/ratersim.hpp"

namespace hintloop {

/// Milliseconds; injectable so tests control lease expiry.
using ServiceClock = std::function<std::int64_t()>;

std::int64_t system_clock_ms();

struct ServiceConfig {
  std::string experiment = "default";
  AssistMode generalist_mode = AssistMode::kV1V2;
  std::int64_t lease_ms = 30LL * 60 * 1000;
  int expert_quota = 1;
  int generalist_quota = 2;
};

void validate(const ServiceConfig& config);

struct ReviewTask {
  std::string task_id;
  std::string video_id;
  std::string rater_id;
  RaterKind pool = RaterKind::kGeneralist;
  AssistMode assist_mode = AssistMode::kNone;
  std::int64_t lease_expiry = 0;
  bool submitted = false;

  friend bool operator==(const ReviewTask&, const ReviewTask&) = default;
};

struct Submission {
  bool decision = false;
  std::vector<Annotation> annotations;
  std::vector<HintResponse> hint_responses;
};

nlohmann::json to_json(const ReviewTask& t);
nlohmann::json to_json(const Submission& s);
Submission submission_from_json(const nlohmann::json& j);

/// Task leasing, hint serving and submission intake. Assignment is
/// serialized; store writes go through the single-writer FeedbackStore.
/// Every mutating request is appended to a request log that replay() can
/// re-apply to a fresh service.
class ReviewService {
 public:
  ReviewService(std::vector<VideoMeta> videos, std::map<std::string, HintPayload> hints,
                ServiceConfig config, FeedbackStore store, ServiceClock clock = system_clock_ms);
  ~ReviewService();

  ReviewService(const ReviewService&) = delete;
  ReviewService& operator=(const ReviewService&) = delete;

  std::optional<ReviewTask> next_task(const std::string& rater_id, RaterKind pool);
  nlohmann::json get_hints(const std::string& video_id, AssistMode mode) const;
  void submit_review(const std::string& task_id, const Submission& submission);
  nlohmann::json metrics(const std::string& experiment) const;
  nlohmann::json media(const std::string& video_id, int max_frames = 32) const;

  std::optional<ReviewTask> task(const std::string& task_id) const;
  const ServiceConfig& config() const noexcept;
  const FeedbackStore& store() const noexcept;

  /// Per video: submitted (expert, generalist) counts.
  std::map<std::string, std::pair<int, int>> submission_counts() const;

  std::vector<nlohmann::json> request_log() const;
  void write_request_log(const std::filesystem::path& path) const;

  /// Re-applies a request log captured from a service with the same videos,
  /// hints and config. Failed requests are re-applied (and fail) the same way.
  void replay(const std::vector<nlohmann::json>& log);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace hintloop
