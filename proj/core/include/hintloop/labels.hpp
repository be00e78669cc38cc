#pragma once

#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "hintloop/synthdata.hpp"

namespace hintloop {

enum class Polarity { kPositive, kCleanNegative, kWeakNegative };

std::string_view to_string(Polarity p);
Polarity parse_polarity(std::string_view text);

/// policy_id of whole-video weak negatives: negative evidence for every policy.
inline constexpr std::string_view kAllPolicies = "*";

struct TrainingLabel {
  std::string video_id;
  std::string policy_id;
  FrameIndex start_frame = 0;
  FrameIndex end_frame = 1;
  Polarity polarity = Polarity::kPositive;
  double weight = 1.0;
  std::string source;

  FrameSpan span() const noexcept { return {start_frame, end_frame}; }
  friend bool operator==(const TrainingLabel&, const TrainingLabel&) = default;
};

nlohmann::json to_json(const TrainingLabel& label);
TrainingLabel label_from_json(const nlohmann::json& j);

}  // namespace hintloop
