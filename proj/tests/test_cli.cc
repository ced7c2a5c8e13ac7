#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "monoref/cli.h"
#include "monoref/container.h"
#include "test_util.h"

namespace monoref {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code;
  std::string out, err;
};

CliRun Invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = RunCommand(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path Scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "monoref_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TEST(CliTest, SelftestPasses) {
  const CliRun r = Invoke({"selftest", "--seed", "3"});
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("all checks passed"), std::string::npos);
}

TEST(CliTest, UsageErrors) {
  EXPECT_NE(Invoke({}).code, 0);
  EXPECT_NE(Invoke({"selftest", "--bogus"}).code, 0);
  EXPECT_NE(Invoke({"frobnicate"}).code, 0);
  const CliRun bad_size = Invoke({"align", "--size", "12by4"});
  EXPECT_EQ(bad_size.code, 1);
  EXPECT_NE(bad_size.err.find("--size"), std::string::npos);
}

TEST(CliTest, MissingAndMalformedInputs) {
  const fs::path dir = Scratch("malformed");
  const CliRun missing = Invoke({"eval-pose", "--pred", (dir / "nope.pmz").string(),
                                 "--gt", (dir / "nope.pmz").string()});
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.err.find("io error"), std::string::npos) << missing.err;

  const fs::path junk = dir / "junk.pmz";
  std::ofstream(junk) << "XXXXnot a container";
  const CliRun bad = Invoke({"eval-pose", "--pred", junk.string(), "--gt", junk.string()});
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find("magic mismatch"), std::string::npos) << bad.err;
}

TEST(CliTest, SynthThenEvalPoseOnGroundTruthIsPerfect) {
  const fs::path dir = Scratch("synth");
  const CliRun s = Invoke({"synth", "--seed", "5", "--scenes", "2", "--size", "12x10",
                           "--out", dir.string()});
  ASSERT_EQ(s.code, 0) << s.err;
  const fs::path fixtures = dir / "fixtures.pmz";
  ASSERT_TRUE(fs::exists(fixtures));
  EXPECT_TRUE(fs::exists(dir / "scene1_view0_gt.ply"));
  const CliRun e = Invoke({"eval-pose", "--pred", fixtures.string(), "--gt",
                           fixtures.string(), "--json", "--out", dir.string()});
  ASSERT_EQ(e.code, 0) << e.err;
  std::ifstream in(dir / "pose_report.json");
  std::stringstream text;
  text << in.rdbuf();
  const MetricReport report = MetricReport::FromJson(text.str());
  ASSERT_EQ(report.scenes.size(), 2u);
  EXPECT_EQ(report.aggregate.maa30, 1.0);
  EXPECT_EQ(report.aggregate.rra5, 1.0);
}

TEST(CliTest, EvalPcdOnGroundTruthScoresZero) {
  const fs::path dir = Scratch("pcd");
  ASSERT_EQ(Invoke({"synth", "--seed", "6", "--size", "10x10", "--out",
                    dir.string()}).code,
            0);
  const std::string f = (dir / "fixtures.pmz").string();
  const CliRun r = Invoke({"eval-pcd", "--pred", f, "--gt", f, "--pred-key",
                           "gt_world", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(dir / "pcd_report.json");
  std::stringstream text;
  text << in.rdbuf();
  const MetricReport report = MetricReport::FromJson(text.str());
  EXPECT_EQ(report.aggregate.acc_mean, 0.0);
  EXPECT_EQ(report.aggregate.comp_median, 0.0);
}

TEST(CliTest, AlignOnSimilarityCorruptionIsExact) {
  const CliRun r = Invoke({"align", "--seed", "9", "--size", "16x16"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream rows(r.out);
  std::string header, line;
  std::getline(rows, header);
  int views = 0;
  while (std::getline(rows, line)) {
    std::istringstream cells(line);
    int view;
    double pre, post_pair, post_gt, scale;
    cells >> view >> pre >> post_pair >> post_gt >> scale;
    ASSERT_TRUE(cells) << line;
    EXPECT_LE(post_gt, 1e-9);
    EXPECT_GT(pre, 1e-3);
    ++views;
  }
  EXPECT_EQ(views, 2);
}

TEST(CliTest, RefineWithInitialWeightsKeepsPairMaps) {
  const fs::path dir = Scratch("refine");
  std::vector<Record> records;
  RefineConfig cfg;
  cfg.hidden_channels = 4;
  cfg.cond_channels = 4;
  AppendWeights(records, RefineWeights::Initialize(cfg, 1));
  SaveContainer(dir / "w.pmz", records);
  const CliRun r = Invoke({"refine", "--weights", (dir / "w.pmz").string(), "--size",
                           "10x12", "--iters", "3", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::vector<Record> out = LoadContainer(dir / "refined.pmz");
  EXPECT_TRUE(HasRecord(out, "scene0/view1/iter3.points"));
  EXPECT_EQ(ReadPointmap(out, "scene0/view1/pointmap"),
            ReadPointmap(out, "scene0/view1/initial"));
  EXPECT_TRUE(fs::exists(dir / "scene0_view1.ply"));
}

TEST(CliTest, BinaryExitCodes) {
  const std::string bin = MONOREF_CLI_PATH;
  EXPECT_EQ(std::system((bin + " selftest > /dev/null").c_str()), 0);
  EXPECT_NE(std::system((bin + " selftest --bogus > /dev/null 2>&1").c_str()), 0);
  EXPECT_NE(std::system((bin + " eval-pose --pred /nonexistent --gt /nonexistent"
                               " > /dev/null 2>&1")
                            .c_str()),
            0);
}

}  // namespace
}  // namespace monoref
