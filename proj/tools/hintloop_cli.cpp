// Operator entry point: one subcommand per loop stage, artifacts under
// <run_root>/run-<config hash>/.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "hintloop/error.hpp"
#include "hintloop/evaluation.hpp"
#include "hintloop/feedbackstore.hpp"
#include "hintloop/http_api.hpp"
#include "hintloop/jsonl.hpp"
#include "hintloop/pipeline.hpp"
#include "hintloop/reviewservice.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hintloop;

namespace {

enum Exit { kOk = 0, kConfigError = 2, kMissingInput = 3, kRuntimeFailure = 4 };

struct ConfigFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MissingInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Context {
  PipelineConfig config;
  PolicyTaxonomy taxonomy;
  fs::path run_dir;
};

Context load_context(const fs::path& config_path) {
  if (!fs::exists(config_path)) {
    throw ConfigFailure(fmt::format("config file not found: {}", config_path.string()));
  }
  json doc;
  try {
    doc = read_json(config_path);
  } catch (const Error& e) {
    throw ConfigFailure(e.what());
  }
  const fs::path base = config_path.parent_path().empty() ? fs::path(".") : config_path.parent_path();
  if (!doc.is_object() || !doc.contains("taxonomy") || !doc["taxonomy"].is_string()) {
    throw ConfigFailure("config: \"taxonomy\" path is required");
  }
  fs::path tax_path = doc["taxonomy"].get<std::string>();
  if (tax_path.is_relative()) tax_path = base / tax_path;
  try {
    PolicyTaxonomy taxonomy = load_taxonomy(tax_path);
    PipelineConfig config = pipeline_config_from_json(doc, &taxonomy, base);
    fs::path run_dir = config.run_root / ("run-" + config_hash(config));
    return {std::move(config), std::move(taxonomy), std::move(run_dir)};
  } catch (const Error& e) {
    throw ConfigFailure(e.what());
  }
}

void check_config(const PipelineConfig& config) {
  auto errors = validate_config(config);
  if (errors.empty()) return;
  std::string msg;
  for (const auto& e : errors) msg += e + "\n";
  msg.pop_back();
  throw ConfigFailure(msg);
}

void require(const fs::path& path, std::string_view stage, std::string_view producer) {
  if (!fs::exists(path)) {
    throw MissingInput(fmt::format("{}: missing input {} (run `{}` first)", stage, path.string(), producer));
  }
}

std::vector<TrainingLabel> read_labels(const fs::path& path) {
  std::vector<TrainingLabel> out;
  for (const auto& j : read_jsonl(path)) out.push_back(label_from_json(j));
  return out;
}

void write_labels(const fs::path& path, std::span<const TrainingLabel> labels) {
  std::vector<json> records;
  for (const auto& l : labels) records.push_back(to_json(l));
  write_jsonl(path, records);
}

template <typename T>
std::vector<json> to_records(const std::vector<T>& items) {
  std::vector<json> out;
  for (const auto& i : items) out.push_back(to_json(i));
  return out;
}

Splits load_splits(const Context& ctx, std::string_view stage) {
  require(ctx.run_dir / "splits.json", stage, "synth");
  return splits_from_json(read_json(ctx.run_dir / "splits.json"));
}

Corpus load_run_corpus(const Context& ctx, std::string_view stage) {
  require(ctx.run_dir / "corpus" / "videos.jsonl", stage, "synth");
  return load_corpus(ctx.run_dir / "corpus");
}

std::map<std::string, HintPayload> load_payloads(const Context& ctx, std::string_view stage) {
  require(ctx.run_dir / "hints.jsonl", stage, "hints");
  std::map<std::string, HintPayload> out;
  for (const auto& j : read_jsonl(ctx.run_dir / "hints.jsonl")) {
    HintPayload p = payload_from_json(j);
    out.emplace(p.video_id, std::move(p));
  }
  return out;
}

ExperimentResult load_experiment(const Context& ctx, std::span<const std::string> arms,
                                 std::string_view stage) {
  const fs::path dir = ctx.run_dir / "outcomes";
  require(dir / "expert.jsonl", stage, "simulate");
  ExperimentResult result;
  for (const auto& j : read_jsonl(dir / "expert.jsonl")) result.expert.push_back(outcome_from_json(j));
  for (const auto& name : arms) {
    auto it = std::find_if(ctx.config.experiment.arms.begin(), ctx.config.experiment.arms.end(),
                           [&](const ExperimentArm& a) { return a.name == name; });
    if (it == ctx.config.experiment.arms.end()) {
      throw ConfigFailure(fmt::format("unknown arm \"{}\"", name));
    }
    require(dir / (name + ".jsonl"), stage, "simulate");
    ArmResult arm{name, it->mode, {}, {}};
    for (const auto& j : read_jsonl(dir / (name + ".jsonl"))) {
      ReviewOutcome o = outcome_from_json(j);
      (o.rater_id == kGeneralistA ? arm.generalist_a : arm.generalist_b).push_back(std::move(o));
    }
    result.arms.push_back(std::move(arm));
  }
  return result;
}

// Stages -------------------------------------------------------------------

void cmd_synth(const Context& ctx) {
  const Corpus corpus = generate_corpus(ctx.config.corpus);
  const Splits splits = split_corpus(corpus, ctx.config.split, ctx.config.corpus.seed);
  fs::create_directories(ctx.run_dir);
  write_json(ctx.run_dir / "config.json", to_json(ctx.config));
  save_corpus(corpus, ctx.run_dir / "corpus");
  write_json(ctx.run_dir / "splits.json", to_json(splits));
  write_labels(ctx.run_dir / "seed_labels.jsonl",
               unassisted_labels(corpus, splits.seed, ctx.config.export_labels));
  write_labels(ctx.run_dir / "eval_labels.jsonl",
               unassisted_labels(corpus, splits.eval, ctx.config.export_labels));
  std::set<std::string> violating;
  for (const auto& t : corpus.truth) violating.insert(t.video_id);
  fmt::print("synth: {} videos ({} violating), splits seed/calib/review/eval = {}/{}/{}/{}\n",
             corpus.videos.size(), violating.size(),
             splits.seed.size(), splits.calib.size(), splits.review.size(), splits.eval.size());
  fmt::print("run directory: {}\n", ctx.run_dir.string());
}

void cmd_train(const Context& ctx, const std::string& labels_arg) {
  const Corpus corpus = load_run_corpus(ctx, "train");
  const fs::path labels_path = labels_arg.empty() ? ctx.run_dir / "seed_labels.jsonl" : fs::path(labels_arg);
  require(labels_path, "train", "synth");
  const auto labels = read_labels(labels_path);
  const ScorerModel model =
      train_scorer(labels, corpus, ctx.config.scorer, ctx.config.train, ctx.config.corpus.policies);
  save_model(model, ctx.run_dir / "model.json");
  fmt::print("train: {} labels, {} policies trained, {} skipped\n", labels.size(),
             model.policies.size(), model.skipped_policies.size());
}

void cmd_calibrate(const Context& ctx, double min_precision) {
  const Corpus corpus = load_run_corpus(ctx, "calibrate");
  const Splits splits = load_splits(ctx, "calibrate");
  require(ctx.run_dir / "model.json", "calibrate", "train");
  const ScorerModel model = load_model(ctx.run_dir / "model.json");
  const auto& policies = ctx.config.corpus.policies;
  const auto series = score_videos(model, corpus, splits.calib, ctx.config.scorer, policies);
  const Corpus calib = select_videos(corpus, splits.calib);
  const auto results = calibrate_policies(series, calib.truth, policies, min_precision);
  json doc = json::array();
  for (const auto& r : results) doc.push_back(to_json(r));
  write_json(ctx.run_dir / "calibration.json", doc);
  fmt::print("{:<28} {:>10} {:>10} {:>10} {:>10}\n", "Policy", "threshold", "precision", "recall",
             "pos frames");
  for (const auto& r : results) {
    if (r.feasible) {
      fmt::print("{:<28} {:>10.4f} {:>10.4f} {:>10.4f} {:>10}\n", r.policy_id, r.threshold,
                 r.achieved_precision, r.achieved_recall, r.positive_frames);
    } else {
      fmt::print("{:<28} {:>10} {:>10} {:>10} {:>10}\n", r.policy_id, "infeasible", "-", "-",
                 r.positive_frames);
    }
  }
}

void cmd_hints(const Context& ctx) {
  const Corpus corpus = load_run_corpus(ctx, "hints");
  const Splits splits = load_splits(ctx, "hints");
  require(ctx.run_dir / "model.json", "hints", "train");
  require(ctx.run_dir / "calibration.json", "hints", "calibrate");
  const ScorerModel model = load_model(ctx.run_dir / "model.json");
  std::vector<CalibrationResult> calibrations;
  for (const auto& j : read_json(ctx.run_dir / "calibration.json")) {
    calibrations.push_back(calibration_from_json(j));
  }
  const auto& policies = ctx.config.corpus.policies;
  const auto series = score_videos(model, corpus, splits.review, ctx.config.scorer, policies);
  const Corpus calib = select_videos(corpus, splits.calib);
  const HintBuild build = build_hints(series, corpus, splits.review, calibrations, ctx.taxonomy,
                                      ctx.config.ranker, ctx.config.gap_fraction,
                                      policy_frequency(calib.truth));
  write_jsonl(ctx.run_dir / "scores.jsonl", to_records(series));
  write_jsonl(ctx.run_dir / "segments.jsonl", to_records(build.segments));
  std::vector<json> payloads;
  std::vector<HintSegment> all_v2;
  for (const auto& [id, p] : build.payloads) {
    payloads.push_back(to_json(p));
    all_v2.insert(all_v2.end(), p.v2.begin(), p.v2.end());
  }
  write_jsonl(ctx.run_dir / "hints.jsonl", payloads);
  const Corpus review = select_videos(corpus, splits.review);
  const auto precision = segment_precision(all_v2, review.truth);
  fmt::print("hints: {} videos, {} merged segments, {} V2 hints, segment precision {}\n",
             build.payloads.size(), build.segments.size(), all_v2.size(),
             precision ? fmt::format("{:.4f}", *precision) : std::string("undef"));
}

void cmd_simulate(const Context& ctx) {
  const Corpus corpus = load_run_corpus(ctx, "simulate");
  const Splits splits = load_splits(ctx, "simulate");
  const auto payloads = load_payloads(ctx, "simulate");
  const Corpus review = select_videos(corpus, splits.review);
  const ExperimentResult result = run_experiment(review, payloads, ctx.config.experiment);
  const fs::path dir = ctx.run_dir / "outcomes";
  fs::create_directories(dir);
  write_jsonl(dir / "expert.jsonl", to_records(result.expert));
  for (const auto& arm : result.arms) {
    std::vector<json> records = to_records(arm.generalist_a);
    for (const auto& o : arm.generalist_b) records.push_back(to_json(o));
    write_jsonl(dir / (arm.arm + ".jsonl"), records);
  }
  fmt::print("simulate: {} videos x {} arms\n", review.videos.size(), result.arms.size());
}

std::vector<std::string> all_arm_names(const Context& ctx) {
  std::vector<std::string> out;
  for (const auto& a : ctx.config.experiment.arms) out.push_back(a.name);
  return out;
}

void cmd_evaluate(const Context& ctx, std::vector<std::string> arms) {
  if (arms.empty()) arms = all_arm_names(ctx);
  const auto payloads = load_payloads(ctx, "evaluate");
  const ExperimentResult result = load_experiment(ctx, arms, "evaluate");
  std::vector<ArmReport> reports;
  json doc = json::array();
  for (const auto& arm : result.arms) {
    reports.push_back(evaluate_arm(result, arm, payloads));
    doc.push_back(to_json(reports.back()));
  }
  const std::string table = comparison_table(reports, arms.front());
  write_json(ctx.run_dir / "report.json", doc);
  write_text(ctx.run_dir / "report.txt", table);
  std::fputs(table.c_str(), stdout);
}

void cmd_export(const Context& ctx, std::string arm) {
  if (arm.empty()) arm = ctx.config.export_arm;
  const Corpus corpus = load_run_corpus(ctx, "export-labels");
  const Splits splits = load_splits(ctx, "export-labels");
  const auto payloads = load_payloads(ctx, "export-labels");
  const std::vector<std::string> arms{arm};
  const ExperimentResult result = load_experiment(ctx, arms, "export-labels");
  const fs::path log = ctx.run_dir / "feedback.log.jsonl";
  fs::remove(log);
  fs::remove(fs::path(log.string() + ".snapshot.json"));
  FeedbackStore store = store_from_outcomes(result.arms.front(), corpus, splits.review, payloads,
                                            FeedbackStore::open(log));
  const Corpus review = select_videos(corpus, splits.review);
  const auto labels = export_training_labels(store.snapshot(), review.videos, ctx.config.export_labels);
  write_labels(ctx.run_dir / "labels.jsonl", labels);
  std::map<Polarity, int> counts;
  for (const auto& l : labels) ++counts[l.polarity];
  fmt::print("export-labels ({}): {} positive, {} clean_negative, {} weak_negative\n", arm,
             counts[Polarity::kPositive], counts[Polarity::kCleanNegative],
             counts[Polarity::kWeakNegative]);
}

void cmd_retrain(const Context& ctx) {
  const Corpus corpus = load_run_corpus(ctx, "retrain-eval");
  require(ctx.run_dir / "seed_labels.jsonl", "retrain-eval", "synth");
  require(ctx.run_dir / "eval_labels.jsonl", "retrain-eval", "synth");
  require(ctx.run_dir / "labels.jsonl", "retrain-eval", "export-labels");
  const RetrainReport report =
      retrain_eval(read_labels(ctx.run_dir / "seed_labels.jsonl"),
                   read_labels(ctx.run_dir / "labels.jsonl"),
                   read_labels(ctx.run_dir / "eval_labels.jsonl"), corpus, ctx.config.scorer,
                   ctx.config.train, ctx.config.corpus.policies);
  const std::string text = format_retrain(report);
  write_json(ctx.run_dir / "retrain.json", to_json(report));
  write_text(ctx.run_dir / "retrain.txt", text);
  std::fputs(text.c_str(), stdout);
}

void cmd_serve(const Context& ctx, const std::string& host, int port, const std::string& mode) {
  const Corpus corpus = load_run_corpus(ctx, "serve");
  const Splits splits = load_splits(ctx, "serve");
  auto payloads = load_payloads(ctx, "serve");
  const Corpus review = select_videos(corpus, splits.review);
  ServiceConfig config;
  config.experiment = "default";
  config.generalist_mode = parse_assist_mode(mode);
  FeedbackStore store = FeedbackStore::open(ctx.run_dir / "service.log.jsonl");
  ReviewService service(review.videos, std::move(payloads), config, std::move(store));
  HttpServer server(service);
  fmt::print("serving {} videos on http://{}:{}/v1\n", review.videos.size(), host, port);
  std::fflush(stdout);
  if (!server.listen(host, port)) throw Error(ErrorCode::kIo, fmt::format("cannot bind {}:{}", host, port));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hintloop: segment hints for video review, simulated raters, and label feedback"};
  app.require_subcommand(1);
  std::string config_path = "configs/default.json";
  app.add_option("-c,--config", config_path, "Pipeline config (JSON)");

  auto* synth = app.add_subcommand("synth", "Generate the synthetic corpus and label splits");
  auto* train = app.add_subcommand("train", "Train the window scorer");
  std::string labels_arg;
  train->add_option("--labels", labels_arg, "Training labels (default: seed labels)");
  auto* calibrate = app.add_subcommand("calibrate", "Pick per-policy thresholds");
  double min_precision = -1;
  calibrate->add_option("--min-precision", min_precision, "Precision floor in (0, 1)");
  auto* hints = app.add_subcommand("hints", "Score, segment and rank hints for the review split");
  auto* simulate = app.add_subcommand("simulate", "Run the simulated rater experiment");
  auto* evaluate = app.add_subcommand("evaluate", "Compare arms against the expert");
  std::vector<std::string> arms;
  evaluate->add_option("--arms", arms, "Arms to report, baseline first")->delimiter(',');
  auto* export_labels = app.add_subcommand("export-labels", "Export training labels from one arm");
  std::string export_arm;
  export_labels->add_option("--arm", export_arm, "Arm whose feedback is exported");
  auto* retrain = app.add_subcommand("retrain-eval", "Retrain with exported labels and compare AUCPR");
  auto* run = app.add_subcommand("run", "Every stage in order");
  auto* serve = app.add_subcommand("serve", "Serve the review API over HTTP");
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string serve_mode = "v1_v2";
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--mode", serve_mode, "Assist mode for generalist tasks");

  CLI11_PARSE(app, argc, argv);

  try {
    Context ctx = load_context(config_path);
    if (min_precision >= 0) ctx.config.min_precision = min_precision;
    if (!export_arm.empty()) ctx.config.export_arm = export_arm;
    check_config(ctx.config);
    if (serve->parsed()) {
      try {
        parse_assist_mode(serve_mode);
      } catch (const Error& e) {
        throw ConfigFailure(e.what());
      }
    }

    if (synth->parsed()) cmd_synth(ctx);
    if (train->parsed()) cmd_train(ctx, labels_arg);
    if (calibrate->parsed()) cmd_calibrate(ctx, ctx.config.min_precision);
    if (hints->parsed()) cmd_hints(ctx);
    if (simulate->parsed()) cmd_simulate(ctx);
    if (evaluate->parsed()) cmd_evaluate(ctx, arms);
    if (export_labels->parsed()) cmd_export(ctx, export_arm);
    if (retrain->parsed()) cmd_retrain(ctx);
    if (serve->parsed()) cmd_serve(ctx, host, port, serve_mode);
    if (run->parsed()) {
      cmd_synth(ctx);
      cmd_train(ctx, "");
      cmd_calibrate(ctx, ctx.config.min_precision);
      cmd_hints(ctx);
      cmd_simulate(ctx);
      cmd_evaluate(ctx, {});
      cmd_export(ctx, "");
      cmd_retrain(ctx);
    }
  } catch (const ConfigFailure& e) {
    fmt::print(stderr, "config error:\n{}\n", e.what());
    return kConfigError;
  } catch (const MissingInput& e) {
    fmt::print(stderr, "{}\n", e.what());
    return kMissingInput;
  } catch (const Error& e) {
    fmt::print(stderr, "error ({}): {}\n", to_string(e.code()), e.what());
    return kRuntimeFailure;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kRuntimeFailure;
  }
  return kOk;
}
