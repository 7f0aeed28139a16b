#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pqnet/cli/app.hpp"

using namespace pqnet;
using namespace pqnet::cli;

namespace {

const char* kTinyConfig = R"(# test run
[run]
seed = 3

[data]
categories = chair:10
k_max = 6

[partae]
encoder_channels = 2,4,4,4
code_dim = 8
decoder_hidden = 16,16
stages = 16,32,64
epochs = 2,1,1
batch = 16
points_per_step = 64

[seq2seq]
hidden = 8
geo_hidden = 16
box_hidden = 16
stop_hidden = 16
epochs = 20
batch = 4

[gan]
z_dim = 4
generator_hidden = 16
critic_hidden = 16
iterations = 10
batch = 4

[svr]
depth_channels = 2,4,4,4
views = 1
epochs = 2

[completion]
epochs = 20

[denoise]
epochs = 20

[generate]
resolution = 32

[eval]
points = 200
distances = chamfer,one-minus-iou
)";

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "pqnet");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Path → content hash of every file below a directory.
std::map<std::string, std::uint64_t> tree_hash(const fs::path& root) {
  std::map<std::string, std::uint64_t> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = fnv1a(slurp(e.path()));
  return out;
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "pqnet_cli_test";
    fs::remove_all(root_);
    fs::create_directories(root_);
    std::ofstream(root_ / "tiny.ini") << kTinyConfig;
    ::unsetenv("PQNET_DATA_ROOT");
    const auto r = invoke(base("main", {"prepare"}));
    ASSERT_EQ(r.code, 0) << r.err;
    for (const std::string stage : {"partae", "seq2seq", "gan", "svr", "completion", "denoise"}) {
      const auto t = invoke(base("main", {"train", stage}));
      ASSERT_EQ(t.code, 0) << stage << ": " << t.err;
    }
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static std::vector<std::string> base(const std::string& run, std::vector<std::string> rest,
                                       const std::string& data = "data") {
    std::vector<std::string> a{"--config", (root_ / "tiny.ini").string(), "--out", (root_ / run).string(),
                               "--set",    "data.root=" + (root_ / data).string()};
    a.insert(a.end(), rest.begin(), rest.end());
    return a;
  }
  static fs::path run_dir(const std::string& run = "main") { return root_ / run; }
  static fs::path data_dir() { return root_ / "data"; }

  static fs::path root_;
};

fs::path CliTest::root_;

}  // namespace

TEST_F(CliTest, PrepareWritesCompleteRecordsAndIsIdempotent) {
  const auto r = invoke(base("census", {"--set", "data.categories=chair:50", "prepare"}, "data50"));
  ASSERT_EQ(r.code, 0) << r.err;
  int dirs = 0;
  for (const std::string split : {"train", "val", "test"})
    for (const auto& e : fs::directory_iterator(root_ / "data50" / "chair" / split)) {
      ++dirs;
      const auto m = nlohmann::json::parse(slurp(e.path() / "manifest.json"));
      const int k = m["part_count"];
      EXPECT_TRUE(fs::exists(e.path() / "shape.vox"));
      for (int p = 0; p < k; ++p) {
        const std::string ps = std::to_string(p);
        EXPECT_TRUE(fs::exists(e.path() / ("part_" + ps + ".vox")));
        EXPECT_TRUE(fs::exists(e.path() / ("part_" + ps + ".box")));
        for (int tag : {16, 32, 64})
          EXPECT_TRUE(fs::exists(e.path() / ("samples_" + ps + "_" + std::to_string(tag) + ".bin")));
      }
    }
  EXPECT_EQ(dirs, 50);
  const auto before = tree_hash(root_ / "data50");
  const auto again = invoke(base("census", {"--set", "data.categories=chair:50", "prepare"}, "data50"));
  ASSERT_EQ(again.code, 0);
  EXPECT_NE(again.out.find("prepared 0 shapes"), std::string::npos) << again.out;
  EXPECT_EQ(tree_hash(root_ / "data50"), before);
}

TEST_F(CliTest, MissingSourceIsAnInputError) {
  EXPECT_EQ(invoke(base("x", {"--set", "data.source=/no/such/dir", "prepare"}, "datax")).code, kExitInput);
  EXPECT_EQ(invoke(base("x", {"--set", "data.k_max=zero", "prepare"})).code, kExitInput);
  EXPECT_EQ(invoke(base("x", {"--set", "nope.key=1", "prepare"})).code, kExitInput);
  EXPECT_EQ(invoke({"--config", "/no/such.ini", "prepare"}).code, kExitInput);
  EXPECT_EQ(invoke({"frobnicate"}).code, kExitInput);
}

TEST_F(CliTest, StageWithoutUpstreamCheckpointIsADependencyError) {
  const auto r = invoke(base("empty_run", {"train", "seq2seq"}));
  EXPECT_EQ(r.code, kExitDependency);
  EXPECT_NE(r.err.find("partae"), std::string::npos);
  EXPECT_EQ(invoke(base("empty_run", {"train", "gan"})).code, kExitDependency);
  EXPECT_EQ(invoke(base("empty_run", {"generate"})).code, kExitDependency);
}

TEST_F(CliTest, StagedPartTrainingKeepsEveryStage) {
  for (int s : {16, 32, 64}) EXPECT_TRUE(fs::exists(run_dir() / "checkpoints" / ("partae_" + std::to_string(s) + ".pqck")));
  for (const std::string f : {"partae.pqck", "seq2seq.pqck", "latents.bin", "gan.pqck", "svr_depth.pqck",
                              "completion.pqck", "denoise.pqck"})
    EXPECT_TRUE(fs::exists(run_dir() / "checkpoints" / f)) << f;
}

TEST_F(CliTest, SeededTrainingRepeatsExactly) {
  ASSERT_EQ(invoke(base("repeat", {"train", "partae"})).code, 0);
  EXPECT_EQ(slurp(run_dir("repeat") / "logs" / "partae_loss.csv"), slurp(run_dir() / "logs" / "partae_loss.csv"));
  fs::copy(run_dir() / "checkpoints" / "partae.pqck", run_dir("repeat") / "checkpoints" / "partae.pqck",
           fs::copy_options::overwrite_existing);
  ASSERT_EQ(invoke(base("repeat", {"train", "seq2seq"})).code, 0);
  EXPECT_EQ(slurp(run_dir("repeat") / "logs" / "seq2seq_loss.csv"), slurp(run_dir() / "logs" / "seq2seq_loss.csv"));
}

TEST_F(CliTest, GenerateIsReproducible) {
  ASSERT_EQ(invoke(base("main", {"--seed", "1", "generate", "--count", "10"})).code, 0);
  std::vector<std::string> first;
  for (int i = 0; i < 10; ++i) first.push_back(slurp(run_dir() / "generate" / (indexed("shape", i) + ".json")));
  ASSERT_EQ(invoke(base("main", {"--seed", "1", "generate", "--count", "10"})).code, 0);
  for (int i = 0; i < 10; ++i) {
    EXPECT_EQ(slurp(run_dir() / "generate" / (indexed("shape", i) + ".json")), first[i]);
    const auto j = nlohmann::json::parse(first[i]);
    EXPECT_GE(j["part_count"].get<int>(), 1);
    EXPECT_LE(j["part_count"].get<int>(), 6);
  }
  const std::string obj = slurp(run_dir() / "generate" / "shape_0000.obj");
  EXPECT_NE(obj.find("g part_0"), std::string::npos);
}

TEST_F(CliTest, InterpolateWritesOneObjPerStep) {
  ASSERT_EQ(invoke(base("main", {"interpolate", "--from", "chair_00000", "--to", "chair_00001", "--steps", "5"})).code, 0);
  int objs = 0;
  for (const auto& e : fs::directory_iterator(run_dir() / "interpolate")) objs += e.path().extension() == ".obj";
  EXPECT_EQ(objs, 5);
  EXPECT_EQ(invoke(base("main", {"interpolate", "--from", "chair_00000", "--to", "missing"})).code, kExitInput);
}

TEST_F(CliTest, CompletionKeepsAtLeastTheInputParts) {
  ASSERT_EQ(invoke(base("main", {"complete", "--shape", "chair_00001", "--remove", "1"})).code, 0);
  const auto j = nlohmann::json::parse(slurp(run_dir() / "complete" / "chair_00001.json"));
  EXPECT_GE(j["part_count"].get<int>(), j["input_part_count"].get<int>());
  ASSERT_EQ(invoke(base("main", {"complete", "--shape", "chair_00004"})).code, 0);
  const std::string sidecar = slurp(run_dir() / "complete" / "chair_00004.json");
  const auto r = nlohmann::json::parse(sidecar);
  EXPECT_GE(r["removed"].size(), 1u);
  EXPECT_GE(r["input_part_count"].get<int>(), 1);
  ASSERT_EQ(invoke(base("main", {"complete", "--shape", "chair_00004"})).code, 0);
  EXPECT_EQ(slurp(run_dir() / "complete" / "chair_00004.json"), sidecar);
  EXPECT_EQ(invoke(base("main", {"complete", "--shape", "chair_00001", "--remove", "0,1,2,3,4,5"})).code, kExitInput);
  ASSERT_EQ(invoke(base("main", {"denoise", "--shape", "chair_00001"})).code, 0);
  const auto d = nlohmann::json::parse(slurp(run_dir() / "denoise" / "chair_00001.json"));
  EXPECT_EQ(d["part_count"].get<std::size_t>(), d["input_order"].size());
}

TEST_F(CliTest, SvrInferenceReadsImagesAndRejectsBadOnes) {
  const fs::path img = data_dir() / "chair" / "test" / "chair_00009" / "depth_0.pgm";
  ASSERT_EQ(invoke(base("main", {"svr-infer", "--image", img.string()})).code, 0);
  EXPECT_TRUE(fs::exists(run_dir() / "svr" / "depth_0.obj"));
  std::ofstream(root_ / "bad.pgm") << "P5 garbage";
  EXPECT_EQ(invoke(base("main", {"svr-infer", "--image", (root_ / "bad.pgm").string()})).code, kExitInput);
}

TEST_F(CliTest, SelfEvaluationIsPerfect) {
  ASSERT_EQ(invoke(base("main", {"eval", "--gen", "split:train", "--ref", "train"})).code, 0);
  const auto reports = nlohmann::json::parse(slurp(run_dir() / "eval" / "report.json"));
  ASSERT_EQ(reports.size(), 2u);
  EXPECT_EQ(reports[1]["distance_kind"], "one-minus-iou");
  for (const auto& r : reports) {
    EXPECT_EQ(r["cov"].get<double>(), 1.0);
    EXPECT_EQ(r["mmd"].get<double>(), 0.0);
    EXPECT_EQ(r["jsd"].get<double>(), 0.0);
  }
  EXPECT_NE(slurp(run_dir() / "eval" / "report.csv").find("one-minus-iou,"), std::string::npos);
}

TEST_F(CliTest, EvaluationMatchesMetricOracles) {
  ASSERT_EQ(invoke(base("census_eval", {"--set", "data.categories=chair:50", "prepare"}, "data50")).code, 0);
  const auto r = invoke(base("census_eval", {"--set", "data.categories=chair:50", "eval", "--gen", "split:val", "--ref", "test"},
                             "data50"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto reports = nlohmann::json::parse(slurp(run_dir("census_eval") / "eval" / "report.json"));
  Context ctx;
  ctx.cfg = resolve_config((root_ / "tiny.ini").string(),
                           {{"data.root", (root_ / "data50").string()}, {"data.categories", "chair:50"}});
  std::ostringstream sink;
  ctx.out = &sink;
  const auto gen = eval_split(ctx, "val"), ref = eval_split(ctx, "test");
  ASSERT_EQ(gen.size(), 5u);
  ASSERT_EQ(ref.size(), 5u);
  Eigen::MatrixXd cd(5, 5), iu(5, 5);
  std::vector<Eigen::Matrix3Xd> gp, rp;
  for (int i = 0; i < 5; ++i) {
    gp.push_back(gen[i].points);
    rp.push_back(ref[i].points);
    for (int j = 0; j < 5; ++j) {
      cd(i, j) = oracle::chamfer(gen[i].points, ref[j].points);
      iu(i, j) = 1.0 - oracle::iou(gen[i].voxels, ref[j].voxels);
    }
  }
  EXPECT_EQ(reports[0]["cov"].get<double>(), oracle::coverage(cd));
  EXPECT_EQ(reports[0]["mmd"].get<double>(), oracle::mmd(cd));
  EXPECT_EQ(reports[1]["cov"].get<double>(), oracle::coverage(iu));
  EXPECT_EQ(reports[1]["mmd"].get<double>(), oracle::mmd(iu));
  EXPECT_NEAR(reports[0]["jsd"].get<double>(), oracle::jsd(gp, rp, 28), 1e-12);
}

TEST_F(CliTest, EmptyGeneratedSetIsAnInputError) {
  fs::create_directories(root_ / "empty_gen");
  EXPECT_EQ(invoke(base("main", {"eval", "--gen", (root_ / "empty_gen").string()})).code, kExitInput);
}

TEST_F(CliTest, ManifestsListEveryArtifact) {
  ASSERT_EQ(invoke(base("main", {"export-mesh", "--shape", "chair_00002"})).code, 0);
  const auto m = nlohmann::json::parse(slurp(run_dir() / "manifests" / "export-mesh.json"));
  EXPECT_EQ(m["command"], "export-mesh");
  EXPECT_FALSE(m["config"].empty());
  EXPECT_FALSE(m["started"].get<std::string>().empty());
  ASSERT_FALSE(m["artifacts"].empty());
  for (const auto& a : m["artifacts"]) EXPECT_TRUE(fs::exists(a.get<std::string>())) << a;
  for (const std::string stage : {"partae", "seq2seq", "gan", "svr", "completion", "denoise"})
    EXPECT_TRUE(fs::exists(run_dir() / "manifests" / ("train_" + stage + ".json")));
}

TEST_F(CliTest, OnlyPrepareWritesTheDataset) {
  const auto before = tree_hash(data_dir());
  ASSERT_EQ(invoke(base("main", {"export-mesh", "--shape", "chair_00003", "--recon"})).code, 0);
  ASSERT_EQ(invoke(base("main", {"generate", "--count", "2"})).code, 0);
  ASSERT_EQ(invoke(base("main", {"eval", "--gen", "split:val", "--ref", "test"})).code, 0);
  EXPECT_EQ(tree_hash(data_dir()), before);
}

TEST_F(CliTest, LockedRunDirectoryIsRejected) {
  fs::create_directories(run_dir("locked"));
  std::ofstream(run_dir("locked") / ".pqnet.lock") << "1\n";
  const auto r = invoke(base("locked", {"prepare"}));
  EXPECT_EQ(r.code, kExitInput);
  EXPECT_NE(r.err.find("in use"), std::string::npos);
  fs::remove(run_dir("locked") / ".pqnet.lock");
  EXPECT_EQ(invoke(base("locked", {"prepare"})).code, 0);
  EXPECT_FALSE(fs::exists(run_dir("locked") / ".pqnet.lock"));
}

TEST(Config, PrecedenceIsFlagsThenEnvironmentThenFile) {
  const fs::path p = fs::temp_directory_path() / "pqnet_precedence.ini";
  std::ofstream(p) << "[data]\nroot = from_file\n[seq2seq]\nepochs = 7 # comment\n";
  ::unsetenv("PQNET_DATA_ROOT");
  EXPECT_EQ(resolve_config(p.string(), {}).data_root, "from_file");
  EXPECT_EQ(resolve_config(p.string(), {}).seq_train.epochs, 7);
  ::setenv("PQNET_DATA_ROOT", "from_env", 1);
  EXPECT_EQ(resolve_config(p.string(), {}).data_root, "from_env");
  EXPECT_EQ(resolve_config(p.string(), {{"data.root", "from_flag"}}).data_root, "from_flag");
  ::unsetenv("PQNET_DATA_ROOT");
  EXPECT_EQ(resolve_config("", {}).seq_train.weights.alpha, 0.01);
  EXPECT_THROW(resolve_config("", {{"seq2seq.alpha", "-1"}}), InvalidInput);
  EXPECT_THROW(resolve_config("", {{"partae.stages", "16,48"}, {"partae.epochs", "1,1"}}), InvalidInput);
  fs::remove(p);
}

TEST(Config, SnapshotRoundTrips) {
  RunConfig c = resolve_config("", {{"gan.lambda", "2.5"}, {"data.categories", "chair:3,lamp:4"}});
  RunConfig d;
  for (const auto& [k, v] : snapshot(c)) set_value(d, k, v);
  d.link();
  EXPECT_EQ(snapshot(d), snapshot(c));
  EXPECT_EQ(snapshot(c).at("gan.lambda"), "2.5");
}
