#include "hintloop/feedbackstore.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <set>
#include <shared_mutex>
#include <tuple>
#include <unordered_map>

#include <fmt/format.h>

#include "hintloop/error.hpp"
#include "hintloop/jsonl.hpp"

namespace hintloop {
namespace {

constexpr int kLogSchema = 1;

AnnotationOrigin parse_origin(std::string_view s) {
  if (s == "organic") return AnnotationOrigin::kOrganic;
  if (s == "from_accepted_hint") return AnnotationOrigin::kFromAcceptedHint;
  throw Error(ErrorCode::kParse, fmt::format("unknown annotation origin \"{}\"", s));
}

Verdict parse_verdict(std::string_view s) {
  if (s == "accepted") return Verdict::kAccepted;
  if (s == "rejected") return Verdict::kRejected;
  throw Error(ErrorCode::kParse, fmt::format("unknown verdict \"{}\"", s));
}

}  // namespace

std::string_view to_string(AnnotationOrigin origin) {
  return origin == AnnotationOrigin::kOrganic ? "organic" : "from_accepted_hint";
}

std::string_view to_string(Verdict verdict) {
  return verdict == Verdict::kAccepted ? "accepted" : "rejected";
}

nlohmann::json to_json(const Annotation& a) {
  nlohmann::json j = {{"annotation_id", a.annotation_id}, {"video_id", a.video_id},
                      {"rater_id", a.rater_id},           {"policy_id", a.policy_id},
                      {"start_frame", a.start_frame},     {"end_frame", a.end_frame},
                      {"origin", to_string(a.origin)},    {"timestamp", a.timestamp}};
  if (!a.hint_id.empty()) j["hint_id"] = a.hint_id;
  return j;
}

Annotation annotation_from_json(const nlohmann::json& j) {
  try {
    Annotation a;
    a.annotation_id = j.value("annotation_id", "");
    a.video_id = j.value("video_id", "");
    a.rater_id = j.value("rater_id", "");
    a.policy_id = j.at("policy_id").get<std::string>();
    a.start_frame = j.at("start_frame").get<FrameIndex>();
    a.end_frame = j.at("end_frame").get<FrameIndex>();
    a.origin = parse_origin(j.at("origin").get<std::string>());
    a.hint_id = j.value("hint_id", "");
    a.timestamp = j.value("timestamp", std::int64_t{0});
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, fmt::format("annotation: {}", e.what()));
  }
}

nlohmann::json to_json(const HintResponse& r) {
  return {{"hint_id", r.hint_id},
          {"rater_id", r.rater_id},
          {"verdict", to_string(r.verdict)},
          {"timestamp", r.timestamp}};
}

HintResponse hint_response_from_json(const nlohmann::json& j) {
  try {
    // rater_id may be left to the review service to fill in.
    return {j.at("hint_id").get<std::string>(), j.value("rater_id", ""),
            parse_verdict(j.at("verdict").get<std::string>()),
            j.value("timestamp", std::int64_t{0})};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, fmt::format("hint response: {}", e.what()));
  }
}

const HintSegment* StoreContents::find_hint(std::string_view hint_id) const {
  auto it = std::find_if(hints.begin(), hints.end(),
                         [&](const HintSegment& h) { return h.hint_id == hint_id; });
  return it == hints.end() ? nullptr : &*it;
}

const VideoMeta* StoreContents::find_video(std::string_view video_id) const {
  auto it = std::find_if(videos.begin(), videos.end(),
                         [&](const VideoMeta& v) { return v.video_id == video_id; });
  return it == videos.end() ? nullptr : &*it;
}

nlohmann::json to_json(const StoreContents& c) {
  nlohmann::json j = {{"schema", kLogSchema},
                      {"videos", nlohmann::json::array()},
                      {"hints", nlohmann::json::array()},
                      {"annotations", nlohmann::json::array()},
                      {"responses", nlohmann::json::array()}};
  for (const auto& v : c.videos) j["videos"].push_back(to_json(v));
  for (const auto& h : c.hints) j["hints"].push_back(to_json(h));
  for (const auto& a : c.annotations) j["annotations"].push_back(to_json(a));
  for (const auto& r : c.responses) j["responses"].push_back(to_json(r));
  return j;
}

struct FeedbackStore::Impl {
  mutable std::shared_mutex mutex;
  StoreContents contents;
  std::unordered_map<std::string, std::size_t> video_index;
  std::unordered_map<std::string, std::size_t> hint_index;
  std::set<std::string> annotation_ids;
  std::set<std::pair<std::string, std::string>> responded;  // (hint, rater)
  std::optional<std::filesystem::path> log_path;
  std::ofstream log;
  int snapshot_every = 0;
  std::size_t records = 0;

  // Validation helpers; caller holds the lock.
  void check_annotation(const Annotation& a, const std::set<std::string>& pending_ids) const {
    auto vit = video_index.find(a.video_id);
    if (vit == video_index.end()) {
      throw Error(ErrorCode::kReference,
                  fmt::format("annotation {}: unknown video {}", a.annotation_id, a.video_id));
    }
    const VideoMeta& v = contents.videos[vit->second];
    if (a.start_frame < 0 || a.end_frame <= a.start_frame || a.end_frame > v.frame_count) {
      throw Error(ErrorCode::kValidation,
                  fmt::format("annotation {}: span [{}, {}) outside video {} of {} frames",
                              a.annotation_id, a.start_frame, a.end_frame, a.video_id,
                              v.frame_count));
    }
    if (a.annotation_id.empty()) {
      throw Error(ErrorCode::kValidation, "annotation without id");
    }
    if (annotation_ids.contains(a.annotation_id) || pending_ids.contains(a.annotation_id)) {
      throw Error(ErrorCode::kDuplicate, fmt::format("duplicate annotation {}", a.annotation_id));
    }
    if (a.origin == AnnotationOrigin::kFromAcceptedHint) {
      auto hit = hint_index.find(a.hint_id);
      if (hit == hint_index.end()) {
        throw Error(ErrorCode::kReference,
                    fmt::format("annotation {}: unknown hint {}", a.annotation_id, a.hint_id));
      }
      if (contents.hints[hit->second].video_id != a.video_id) {
        throw Error(ErrorCode::kReference,
                    fmt::format("annotation {}: hint {} belongs to another video",
                                a.annotation_id, a.hint_id));
      }
    }
  }

  void check_response(const HintResponse& r,
                      const std::set<std::pair<std::string, std::string>>& pending) const {
    if (!hint_index.contains(r.hint_id)) {
      throw Error(ErrorCode::kReference, fmt::format("response to unknown hint {}", r.hint_id));
    }
    auto key = std::make_pair(r.hint_id, r.rater_id);
    if (responded.contains(key) || pending.contains(key)) {
      throw Error(ErrorCode::kDuplicate,
                  fmt::format("rater {} already responded to hint {}", r.rater_id, r.hint_id));
    }
  }

  void append_log(std::string_view type, const nlohmann::json& data) {
    ++records;
    if (!log.is_open()) return;
    nlohmann::json rec = {{"schema", kLogSchema}, {"type", type}, {"data", data}};
    log << rec.dump() << '\n';
    log.flush();
    if (!log) throw Error(ErrorCode::kIo, "feedback log write failed");
    if (snapshot_every > 0 && records % static_cast<std::size_t>(snapshot_every) == 0) {
      auto snap = *log_path;
      snap += ".snapshot.json";
      write_json(snap, to_json(contents));
    }
  }

  void apply_video(const VideoMeta& v, bool log_it) {
    auto it = video_index.find(v.video_id);
    if (it != video_index.end()) {
      if (contents.videos[it->second] == v) return;
      throw Error(ErrorCode::kDuplicate, fmt::format("video {} registered twice", v.video_id));
    }
    video_index.emplace(v.video_id, contents.videos.size());
    contents.videos.push_back(v);
    if (log_it) append_log("video", to_json(v));
  }

  void apply_hint(const HintSegment& h, bool log_it) {
    auto it = hint_index.find(h.hint_id);
    if (it != hint_index.end()) {
      if (contents.hints[it->second] == h) return;
      throw Error(ErrorCode::kDuplicate, fmt::format("hint {} registered twice", h.hint_id));
    }
    if (!video_index.contains(h.video_id)) {
      throw Error(ErrorCode::kReference,
                  fmt::format("hint {}: unknown video {}", h.hint_id, h.video_id));
    }
    hint_index.emplace(h.hint_id, contents.hints.size());
    contents.hints.push_back(h);
    if (log_it) append_log("hint", to_json(h));
  }

  void apply_annotation(const Annotation& a, bool log_it) {
    annotation_ids.insert(a.annotation_id);
    contents.annotations.push_back(a);
    if (log_it) append_log("annotation", to_json(a));
  }

  void apply_response(const HintResponse& r, bool log_it) {
    responded.emplace(r.hint_id, r.rater_id);
    contents.responses.push_back(r);
    if (log_it) append_log("hint_response", to_json(r));
  }
};

FeedbackStore::FeedbackStore() : impl_(std::make_unique<Impl>()) {}
FeedbackStore::~FeedbackStore() = default;
FeedbackStore::FeedbackStore(FeedbackStore&&) noexcept = default;
FeedbackStore& FeedbackStore::operator=(FeedbackStore&&) noexcept = default;

FeedbackStore FeedbackStore::open(const std::filesystem::path& log_path, int snapshot_every) {
  FeedbackStore store;
  Impl& impl = *store.impl_;
  if (std::filesystem::exists(log_path)) {
    for (const auto& rec : read_jsonl(log_path)) {
      if (rec.value("schema", 0) != kLogSchema) {
        throw Error(ErrorCode::kParse, fmt::format("{}: unsupported log schema", log_path.string()));
      }
      const std::string type = rec.at("type").get<std::string>();
      const auto& data = rec.at("data");
      if (type == "video") {
        impl.apply_video(video_from_json(data), false);
      } else if (type == "hint") {
        impl.apply_hint(hint_segment_from_json(data), false);
      } else if (type == "annotation") {
        Annotation a = annotation_from_json(data);
        impl.check_annotation(a, {});
        impl.apply_annotation(a, false);
      } else if (type == "hint_response") {
        HintResponse r = hint_response_from_json(data);
        impl.check_response(r, {});
        impl.apply_response(r, false);
      } else {
        throw Error(ErrorCode::kParse, fmt::format("unknown log record type \"{}\"", type));
      }
      ++impl.records;
    }
  }
  if (log_path.has_parent_path()) std::filesystem::create_directories(log_path.parent_path());
  impl.log_path = log_path;
  impl.snapshot_every = snapshot_every;
  impl.log.open(log_path, std::ios::app | std::ios::binary);
  if (!impl.log) {
    throw Error(ErrorCode::kIo, fmt::format("cannot open feedback log {}", log_path.string()));
  }
  return store;
}

void FeedbackStore::register_video(const VideoMeta& video) {
  std::unique_lock lock(impl_->mutex);
  impl_->apply_video(video, true);
}

void FeedbackStore::register_hint(const HintSegment& hint) {
  std::unique_lock lock(impl_->mutex);
  impl_->apply_hint(hint, true);
}

void FeedbackStore::record_annotation(const Annotation& annotation) {
  record_batch(std::span(&annotation, 1), {});
}

void FeedbackStore::record_hint_response(const HintResponse& response) {
  record_batch({}, std::span(&response, 1));
}

void FeedbackStore::record_batch(std::span<const Annotation> annotations,
                                 std::span<const HintResponse> responses) {
  std::unique_lock lock(impl_->mutex);
  std::set<std::string> pending_ids;
  for (const auto& a : annotations) {
    impl_->check_annotation(a, pending_ids);
    pending_ids.insert(a.annotation_id);
  }
  std::set<std::pair<std::string, std::string>> pending;
  for (const auto& r : responses) {
    impl_->check_response(r, pending);
    pending.emplace(r.hint_id, r.rater_id);
  }
  for (const auto& a : annotations) impl_->apply_annotation(a, true);
  for (const auto& r : responses) impl_->apply_response(r, true);
}

StoreContents FeedbackStore::snapshot() const {
  std::shared_lock lock(impl_->mutex);
  return impl_->contents;
}

std::size_t FeedbackStore::record_count() const {
  std::shared_lock lock(impl_->mutex);
  return impl_->records;
}

std::vector<Annotation> FeedbackStore::annotations_for(std::string_view video_id) const {
  std::shared_lock lock(impl_->mutex);
  std::vector<Annotation> out;
  for (const auto& a : impl_->contents.annotations) {
    if (a.video_id == video_id) out.push_back(a);
  }
  return out;
}

bool FeedbackStore::has_hint(std::string_view hint_id) const {
  std::shared_lock lock(impl_->mutex);
  return impl_->hint_index.contains(std::string(hint_id));
}

std::optional<HintSegment> FeedbackStore::hint(std::string_view hint_id) const {
  std::shared_lock lock(impl_->mutex);
  auto it = impl_->hint_index.find(std::string(hint_id));
  if (it == impl_->hint_index.end()) return std::nullopt;
  return impl_->contents.hints[it->second];
}

void FeedbackStore::write_snapshot(const std::filesystem::path& path) const {
  write_json(path, to_json(snapshot()));
}

std::vector<TrainingLabel> export_training_labels(const StoreContents& store,
                                                  std::span<const VideoMeta> videos,
                                                  const ExportConfig& config) {
  std::vector<TrainingLabel> out;
  std::set<std::pair<std::string, std::string>> mirrored;  // (hint, rater)
  std::set<std::string> annotated_videos;
  for (const auto& a : store.annotations) {
    annotated_videos.insert(a.video_id);
    std::string source = a.origin == AnnotationOrigin::kOrganic
                             ? fmt::format("annotation:{}", a.annotation_id)
                             : fmt::format("hint:{}:{}", a.hint_id, a.rater_id);
    if (a.origin == AnnotationOrigin::kFromAcceptedHint) mirrored.emplace(a.hint_id, a.rater_id);
    out.push_back({a.video_id, a.policy_id, a.start_frame, a.end_frame, Polarity::kPositive,
                   config.positive_weight, std::move(source)});
  }
  for (const auto& r : store.responses) {
    const HintSegment* h = store.find_hint(r.hint_id);
    if (h == nullptr) {
      throw Error(ErrorCode::kReference, fmt::format("response to unknown hint {}", r.hint_id));
    }
    if (r.verdict == Verdict::kAccepted) {
      if (mirrored.contains({r.hint_id, r.rater_id})) continue;
      out.push_back({h->video_id, h->policy_id, h->start_frame, h->end_frame, Polarity::kPositive,
                     config.positive_weight, fmt::format("hint:{}:{}", r.hint_id, r.rater_id)});
    } else {
      out.push_back({h->video_id, h->policy_id, h->start_frame, h->end_frame,
                     Polarity::kCleanNegative, config.clean_negative_weight,
                     fmt::format("rejected:{}:{}", r.hint_id, r.rater_id)});
    }
  }
  for (const auto& v : videos) {
    if (annotated_videos.contains(v.video_id)) continue;
    out.push_back({v.video_id, std::string(kAllPolicies), 0, v.frame_count,
                   Polarity::kWeakNegative, config.weak_negative_weight,
                   fmt::format("unannotated:{}", v.video_id)});
  }
  std::sort(out.begin(), out.end(), [](const TrainingLabel& a, const TrainingLabel& b) {
    return std::tie(a.video_id, a.polarity, a.policy_id, a.start_frame, a.end_frame, a.source) <
           std::tie(b.video_id, b.polarity, b.policy_id, b.start_frame, b.end_frame, b.source);
  });
  return out;
}

}  // namespace hintloop
