#include "hintloop/labels.hpp"

#include <fmt/format.h>

#include "hintloop/error.hpp"

namespace hintloop {

std::string_view to_string(Polarity p) {
  switch (p) {
    case Polarity::kPositive: return "positive";
    case Polarity::kCleanNegative: return "clean_negative";
    case Polarity::kWeakNegative: return "weak_negative";
  }
  return "positive";
}

Polarity parse_polarity(std::string_view text) {
  if (text == "positive") return Polarity::kPositive;
  if (text == "clean_negative") return Polarity::kCleanNegative;
  if (text == "weak_negative") return Polarity::kWeakNegative;
  throw Error(ErrorCode::kParse, fmt::format("unknown polarity \"{}\"", text));
}

nlohmann::json to_json(const TrainingLabel& label) {
  return {{"video_id", label.video_id},   {"policy_id", label.policy_id},
          {"start_frame", label.start_frame}, {"end_frame", label.end_frame},
          {"polarity", to_string(label.polarity)}, {"weight", label.weight},
          {"source", label.source}};
}

TrainingLabel label_from_json(const nlohmann::json& j) {
  TrainingLabel l;
  l.video_id = j.at("video_id").get<std::string>();
  l.policy_id = j.at("policy_id").get<std::string>();
  l.start_frame = j.at("start_frame").get<FrameIndex>();
  l.end_frame = j.at("end_frame").get<FrameIndex>();
  l.polarity = parse_polarity(j.at("polarity").get<std::string>());
  l.weight = j.at("weight").get<double>();
  l.source = j.value("source", "");
  if (!(l.weight > 0)) {
    throw Error(ErrorCode::kValidation, fmt::format("label on {}: weight must be > 0", l.video_id));
  }
  if (l.end_frame <= l.start_frame || l.start_frame < 0) {
    throw Error(ErrorCode::kValidation, fmt::format("label on {}: bad span", l.video_id));
  }
  return l;
}

}  // namespace hintloop
