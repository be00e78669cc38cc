#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>

#include "fixtures.hpp"
#include "hintloop/jsonl.hpp"

namespace fs = std::filesystem;

#ifdef HINTLOOP_CLI_PATH

namespace {

struct Result {
  int code = -1;
  std::string output;
};

Result run_cli(const fs::path& config, const std::string& args) {
  const std::string cmd =
      std::string(HINTLOOP_CLI_PATH) + " -c " + config.string() + " " + args + " 2>&1";
  Result r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe) != nullptr) r.output += buf.data();
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

nlohmann::json small_config() {
  return {{"taxonomy", hintloop::testing::source_path("data/taxonomy.json").string()},
          {"corpus",
           {{"n_videos", 120},
            {"min_frames", 100},
            {"max_frames", 160},
            {"violating_fraction", 0.3},
            {"dims", 8},
            {"policies", {"violence.graphic", "nudity.partial", "drugs.use"}}}},
          {"train", {{"epochs", 2}}}};
}

fs::path write_config(const fs::path& dir, const nlohmann::json& doc) {
  const fs::path path = dir / "config.json";
  std::ofstream(path) << doc.dump(2);
  return path;
}

fs::path only_run_dir(const fs::path& dir) {
  fs::path found;
  for (const auto& e : fs::directory_iterator(dir / "runs")) found = e.path();
  return found;
}

}  // namespace

TEST(Cli, StagesInOrder) {
  const auto dir = hintloop::testing::temp_dir("cli");
  const auto cfg = write_config(dir, small_config());

  auto early = run_cli(cfg, "train");
  EXPECT_EQ(early.code, 3) << early.output;
  EXPECT_NE(early.output.find("train: missing input"), std::string::npos) << early.output;
  EXPECT_NE(early.output.find("synth"), std::string::npos);

  for (const char* stage : {"synth", "train", "calibrate --min-precision 0.40", "hints", "simulate",
                            "evaluate --arms baseline,v1,v1_v2", "export-labels", "retrain-eval"}) {
    auto r = run_cli(cfg, stage);
    ASSERT_EQ(r.code, 0) << stage << "\n" << r.output;
    if (std::string(stage).rfind("evaluate", 0) == 0) {
      for (const char* col : {"Treatment", "Precision", "Recall", "Disagreement%", "# Videos"}) {
        EXPECT_NE(r.output.find(col), std::string::npos) << r.output;
      }
    }
    if (std::string(stage) == "retrain-eval") {
      EXPECT_NE(r.output.find("AUCPR"), std::string::npos) << r.output;
    }
  }
  const fs::path run = only_run_dir(dir);
  for (const char* file : {"config.json", "splits.json", "model.json", "calibration.json",
                           "hints.jsonl", "outcomes/expert.jsonl", "outcomes/v1_v2.jsonl",
                           "report.json", "labels.jsonl", "retrain.json"}) {
    EXPECT_TRUE(fs::exists(run / file)) << file;
  }
  auto cal = hintloop::read_json(run / "calibration.json");
  ASSERT_EQ(cal.size(), 3u);
  for (const auto& r : cal) {
    EXPECT_DOUBLE_EQ(r["min_precision"].get<double>(), 0.40);
    if (r["feasible"].get<bool>()) EXPECT_GE(r["achieved_precision"].get<double>(), 0.40);
  }

  // A bad override fails validation before anything is written.
  auto bad = run_cli(cfg, "calibrate --min-precision 1.5");
  EXPECT_EQ(bad.code, 2) << bad.output;
  EXPECT_NE(bad.output.find("min_precision"), std::string::npos);
}

TEST(Cli, RunIsReproducible) {
  const auto dir_a = hintloop::testing::temp_dir("cli-a");
  const auto dir_b = hintloop::testing::temp_dir("cli-b");
  ASSERT_EQ(run_cli(write_config(dir_a, small_config()), "run").code, 0);
  ASSERT_EQ(run_cli(write_config(dir_b, small_config()), "run").code, 0);
  const fs::path a = only_run_dir(dir_a), b = only_run_dir(dir_b);
  EXPECT_EQ(a.filename(), b.filename());
  for (const char* file : {"labels.jsonl", "report.json", "retrain.json", "hints.jsonl"}) {
    std::ifstream fa(a / file), fb(b / file);
    std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
    EXPECT_FALSE(sa.empty()) << file;
    EXPECT_EQ(sa, sb) << file;
  }
}

TEST(Cli, ConfigErrorsAreExhaustiveAndWriteNothing) {
  const auto dir = hintloop::testing::temp_dir("cli-bad");
  auto doc = small_config();
  doc["corpus"]["n_videos"] = -1;
  doc["min_precision"] = 0;
  doc["mystery"] = true;
  auto r = run_cli(write_config(dir, doc), "synth");
  EXPECT_EQ(r.code, 2) << r.output;
  for (const char* needle : {"n_videos", "min_precision", "mystery"}) {
    EXPECT_NE(r.output.find(needle), std::string::npos) << r.output;
  }
  EXPECT_FALSE(fs::exists(dir / "runs"));

  auto missing = run_cli(dir / "absent.json", "synth");
  EXPECT_EQ(missing.code, 2);
  auto no_tax = small_config();
  no_tax.erase("taxonomy");
  EXPECT_EQ(run_cli(write_config(dir, no_tax), "synth").code, 2);
  auto unknown_arm = run_cli(write_config(dir, small_config()), "export-labels --arm ghost");
  EXPECT_EQ(unknown_arm.code, 2) << unknown_arm.output;
}

#endif
