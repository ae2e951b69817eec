#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "reid/cli.hpp"
#include "reid/config.hpp"
#include "reid/data.hpp"
#include "test_util.hpp"

namespace reid {
namespace {

namespace fs = std::filesystem;
using testing::scratch_dir;
using testing::slurp;

struct CliRun {
  int code;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

// Small benchmark so each CLI round trip stays fast.
fs::path small_dataset(const fs::path& dir) {
  const CliRun r = cli({"synth", "--out", (dir / "data").string(), "--set", "num_ids=16", "--set",
                     "num_train_ids=8", "--set", "samples_per_id=8"});
  EXPECT_EQ(r.code, kExitOk) << r.err;
  return dir / "data" / "manifest.csv";
}

fs::path trained(const fs::path& dir, const fs::path& data, const std::string& variant,
                 const std::string& epochs = "3") {
  const fs::path out = dir / ("train_" + variant);
  const CliRun r = cli({"train", "--data", data.string(), "--out", out.string(), "--variant",
                     variant, "--epochs", epochs, "--set", "validation.every=1"});
  EXPECT_EQ(r.code, kExitOk) << r.err;
  return out;
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> v;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) v.push_back(l);
  return v;
}

TEST(CliSynth, DefaultConfigRoundTrip) {
  const auto dir = scratch_dir();
  const CliRun r = cli({"synth", "--out", (dir / "d").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const Dataset back = load_manifest(dir / "d" / "manifest.csv");
  const Dataset want = gen_synthetic(SynthConfig{});
  ASSERT_EQ(back.items.size(), 64u * 16u);
  for (std::size_t i = 0; i < want.items.size(); ++i) {
    ASSERT_EQ(payload_row(back.items[i].payload), payload_row(want.items[i].payload));
    ASSERT_EQ(back.items[i].split, want.items[i].split);
  }
  EXPECT_TRUE(fs::exists(dir / "d" / "run_manifest.json"));
}

TEST(CliSynth, CreatesMissingDirAndReportsUnwritable) {
  const auto dir = scratch_dir();
  EXPECT_EQ(cli({"synth", "--out", (dir / "a" / "b" / "c").string(), "--set", "num_ids=4",
                 "--set", "num_train_ids=2"})
                .code,
            kExitOk);
  EXPECT_TRUE(fs::exists(dir / "a" / "b" / "c" / "manifest.csv"));
  testing::spit(dir / "file", "x");
  const CliRun r = cli({"synth", "--out", (dir / "file" / "sub").string()});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_NE(r.err.find("file"), std::string::npos) << r.err;
}

TEST(CliSynth, OutputRootFromEnvironment) {
  const auto dir = scratch_dir();
  ::setenv("REID_OUTPUT_ROOT", dir.c_str(), 1);
  const CliRun r = cli({"synth", "--set", "num_ids=4", "--set", "num_train_ids=2"});
  ::unsetenv("REID_OUTPUT_ROOT");
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(fs::exists(dir / "synth" / "manifest.csv"));
}

TEST(CliExitCodes, UsageAndRuntime) {
  const auto dir = scratch_dir();
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(cli({"synth", "--out", dir.string(), "--set", "bogus_key=1"}).code, kExitUsage);
  EXPECT_EQ(cli({"train"}).code, kExitUsage);
  EXPECT_EQ(cli({"train", "--data", (dir / "none.csv").string(), "--out", dir.string()}).code,
            kExitRuntime);
  const auto data = small_dataset(dir);
  EXPECT_EQ(cli({"train", "--data", data.string(), "--out", (dir / "t").string(), "--variant",
                 "medium"})
                .code,
            kExitUsage);
  EXPECT_EQ(cli({"eval", "--data", data.string(), "--checkpoint", (dir / "none.json").string(),
                 "--out", (dir / "e").string()})
                .code,
            kExitRuntime);
  EXPECT_EQ(cli({"--version"}).code, kExitOk);
}

TEST(CliTrain, ZeroEpochs) {
  const auto dir = scratch_dir();
  const auto data = small_dataset(dir);
  const auto out = trained(dir, data, "stronger", "0");
  EXPECT_EQ(slurp(out / "history.csv"), "epoch,lr,ce_loss,triplet_loss,total_loss,mAP,rank1\n");
  EXPECT_TRUE(fs::exists(out / "run_manifest.json"));
  EXPECT_TRUE(fs::exists(out / "checkpoint.json"));
}

TEST(CliTrain, VariantsProduceComparableHistories) {
  const auto dir = scratch_dir();
  const auto data = small_dataset(dir);
  const auto a = lines(slurp(trained(dir, data, "strong") / "history.csv"));
  const auto b = lines(slurp(trained(dir, data, "stronger") / "history.csv"));
  ASSERT_EQ(a.size(), 4u);
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(a[0], b[0]);
  for (std::size_t i = 1; i < a.size(); ++i) EXPECT_EQ(a[i].substr(0, a[i].find(',')),
                                                       b[i].substr(0, b[i].find(',')));
  const Json m = read_json_file(dir / "train_strong" / "run_manifest.json");
  EXPECT_EQ(m["command"], "train");
  EXPECT_EQ(m["config"]["variant"], "strong");
  EXPECT_EQ(m["config"]["schedule"]["total_epochs"], 3);
}

TEST(CliEval, RerankLambdaOneMatchesPlain) {
  const auto dir = scratch_dir();
  const auto data = small_dataset(dir);
  const auto ck = (trained(dir, data, "stronger") / "checkpoint.json").string();
  ASSERT_EQ(cli({"eval", "--data", data.string(), "--checkpoint", ck, "--out",
                 (dir / "plain").string(), "--metric", "euclidean"})
                .code,
            kExitOk);
  ASSERT_EQ(cli({"eval", "--data", data.string(), "--checkpoint", ck, "--out",
                 (dir / "rr").string(), "--rerank", "--set", "rerank_params.lambda=1"})
                .code,
            kExitOk);
  // Re-ranking works on normalized features, so compare with a plain run on
  // the same geometry: the reported baseline.
  const Json rr = read_json_file(dir / "rr" / "eval_report.json");
  EXPECT_EQ(rr["mAP"].get<double>(), rr["baseline"]["mAP"].get<double>());
  EXPECT_EQ(rr["delta_mAP"].get<double>(), 0.0);
  EXPECT_TRUE(rr.contains("rank1") && rr.contains("rank5") && rr.contains("rank10"));
}

TEST(CliEval, SelfMatchIsPerfect) {
  const auto dir = scratch_dir();
  const auto data = small_dataset(dir);
  const auto ck = (trained(dir, data, "strong") / "checkpoint.json").string();
  const CliRun r = cli({"eval", "--data", data.string(), "--checkpoint", ck, "--out",
                     (dir / "self").string(), "--self-match", "--no-camera-filter"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(read_json_file(dir / "self" / "eval_report.json")["mAP"].get<double>(), 1.0);
}

TEST(CliEval, QueryExpansionReportsDelta) {
  const auto dir = scratch_dir();
  const auto data = small_dataset(dir);
  const auto ck = (trained(dir, data, "stronger") / "checkpoint.json").string();
  ASSERT_EQ(cli({"eval", "--data", data.string(), "--checkpoint", ck, "--out",
                 (dir / "qe").string(), "--qe"})
                .code,
            kExitOk);
  const Json j = read_json_file(dir / "qe" / "eval_report.json");
  EXPECT_NEAR(j["delta_mAP"].get<double>(),
              j["mAP"].get<double>() - j["baseline"]["mAP"].get<double>(), 1e-15);
}

TEST(CliDiagnose, NormalizeFirstAndRowCount) {
  const auto dir = scratch_dir();
  const auto data = small_dataset(dir);
  ASSERT_EQ(cli({"diagnose", "--data", data.string(), "--out", (dir / "n").string(),
                 "--normalize-first", "--batches", "7", "--set", "P=4"})
                .code,
            kExitOk);
  const auto rows = lines(slurp(dir / "n" / "diagnostics.csv"));
  ASSERT_EQ(rows.size(), 8u);
  EXPECT_EQ(rows[0],
            "batch_id,variant,positive_agreement,negative_agreement,mean_branch_cosine,"
            "radial_leakage");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    std::vector<std::string> f;
    std::istringstream in(rows[i]);
    for (std::string c; std::getline(in, c, ',');) f.push_back(c);
    EXPECT_EQ(f[2], "1");
    EXPECT_EQ(f[3], "1");
  }
  ASSERT_EQ(cli({"diagnose", "--data", data.string(), "--out", (dir / "raw").string(),
                 "--batches", "5", "--set", "P=4"})
                .code,
            kExitOk);
  EXPECT_EQ(lines(slurp(dir / "raw" / "diagnostics.csv")).size(), 6u);
}

TEST(CliReplay, ReproducesOutputs) {
  const auto dir = scratch_dir();
  const auto data = small_dataset(dir);
  const auto tr = trained(dir, data, "stronger");
  ASSERT_EQ(cli({"replay", (tr / "run_manifest.json").string(), "--out",
                 (dir / "again").string()})
                .code,
            kExitOk);
  EXPECT_EQ(slurp(tr / "history.csv"), slurp(dir / "again" / "history.csv"));
  EXPECT_EQ(slurp(tr / "checkpoint.json"), slurp(dir / "again" / "checkpoint.json"));
}

}  // namespace
}  // namespace reid
