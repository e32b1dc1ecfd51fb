#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "hcanet/cli.hpp"
#include "hcanet/data.hpp"
#include "hcanet/pipeline.hpp"
#include "test_support.hpp"

namespace hcanet::cli {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "hcanet");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

pipeline::ModelConfig tiny() {
  pipeline::ModelConfig c;
  c.height = 32;
  c.width = 24;
  c.features = 4;
  c.unet_depth = 2;
  c.unet_channels = 4;
  return c;
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(invoke({"synth", "--out", "x", "--bogus"}).code, kExitUsage);
  EXPECT_EQ(invoke({"synth", "--out", "x", "--size", "abc"}).code, kExitUsage);
  EXPECT_EQ(invoke({"synth", "--out", "x", "--count", "0"}).code, kExitUsage);
  EXPECT_EQ(invoke({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(invoke({}).code, kExitUsage);
  const Result r = invoke({"train", "--data", "d"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("--out"), std::string::npos) << r.err;
}

TEST(Cli, RuntimeFailuresExitOne) {
  const fs::path dir = testing::scratch_dir("cli_fail");
  const Result r = invoke({"warp", "--ckpt", (dir / "missing.hcac").string(), "--sample",
                           dir.string(), "--out", (dir / "o.png").string()});
  EXPECT_EQ(r.code, kExitFailure);
  EXPECT_NE(r.err.find("error"), std::string::npos);
  EXPECT_EQ(invoke({"gradcheck", "--module", "nope"}).code, kExitUsage);
}

TEST(Cli, SynthIsByteIdenticalAcrossRuns) {
  const fs::path dir = testing::scratch_dir("cli_synth");
  for (const char* name : {"a", "b"}) {
    ASSERT_EQ(invoke({"synth", "--out", (dir / name).string(), "--count", "4", "--seed", "7",
                      "--size", "32x24"})
                  .code,
              kExitOk);
  }
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(dir / "a")) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), dir / "a");
    EXPECT_EQ(read_bytes(entry.path()), read_bytes(dir / "b" / rel)) << rel;
    ++files;
  }
  EXPECT_EQ(files, 4u * 8u);
}

TEST(Cli, TryonWithZeroRegressorEmitsInputClothing) {
  const fs::path dir = testing::scratch_dir("cli_tryon");
  ASSERT_EQ(invoke({"synth", "--out", (dir / "data").string(), "--count", "1", "--size", "32x24"}).code,
            kExitOk);
  const pipeline::TryOnModel model(tiny(), 1);  // fresh models start with a zero regressor head
  model.save((dir / "m.hcac").string());
  const std::string sample = (dir / "data" / "00000").string();
  const Result r = invoke({"tryon", "--ckpt", (dir / "m.hcac").string(), "--sample", sample, "--out",
                           (dir / "out.png").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const Tensor cloth = data::load_image(sample + "/cloth.png");
  const Tensor warped = data::load_image((dir / "out_warped.png").string());
  EXPECT_LE(testing::max_abs_diff(cloth, warped), 1.0 / 255.0);
  for (const char* f : {"out.png", "out_mask.png", "out_rendered.png", "out_warped_mask.png"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }

  ASSERT_EQ(invoke({"warp", "--ckpt", (dir / "m.hcac").string(), "--sample", sample, "--out",
                    (dir / "w.png").string()})
                .code,
            kExitOk);
  EXPECT_LE(testing::max_abs_diff(cloth, data::load_image((dir / "w.png").string())), 1.0 / 255.0);
}

TEST(Cli, TrainAndEvalProduceFiles) {
  const fs::path dir = testing::scratch_dir("cli_train");
  ASSERT_EQ(invoke({"synth", "--out", (dir / "data").string(), "--count", "2", "--size", "32x24"}).code,
            kExitOk);
  {
    std::ofstream cfg(dir / "run.cfg");
    cfg << "# tiny run\nsteps = 3\nbatch = 2\nheight = 32\nwidth = 24\nfeature_channels = 4\n"
           "unet_depth = 2\nunet_channels = 4\n";
  }
  const Result t = invoke({"train", "--data", (dir / "data").string(), "--mode", "joint", "--config",
                           (dir / "run.cfg").string(), "--out", (dir / "m.hcac").string(), "--history",
                           (dir / "h.csv").string()});
  ASSERT_EQ(t.code, kExitOk) << t.err;
  EXPECT_TRUE(fs::exists(dir / "m.hcac"));
  std::istringstream hist(read_bytes(dir / "h.csv"));
  std::string line;
  std::size_t rows = 0;
  while (std::getline(hist, line)) ++rows;
  EXPECT_EQ(rows, 4u);

  const Result e = invoke({"eval", "--ckpt", (dir / "m.hcac").string(), "--data",
                           (dir / "data").string(), "--out", (dir / "eval.csv").string()});
  ASSERT_EQ(e.code, kExitOk) << e.err;
  const std::string csv = read_bytes(dir / "eval.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "id,iou,ssim");
  EXPECT_NE(csv.find("\nmean,"), std::string::npos) << csv;

  {
    std::ofstream bad(dir / "bad.cfg");
    bad << "steps = 3\nlearning_rate_typo = 1\n";
  }
  const Result b = invoke({"train", "--data", (dir / "data").string(), "--config",
                           (dir / "bad.cfg").string(), "--out", (dir / "x.hcac").string()});
  EXPECT_EQ(b.code, kExitFailure);
  EXPECT_NE(b.err.find("learning_rate_typo"), std::string::npos) << b.err;
}

TEST(Cli, GradcheckModulePrintsTableAndPasses) {
  const Result r = invoke({"gradcheck", "--module", "tps"});
  EXPECT_EQ(r.code, kExitOk) << r.out;
  EXPECT_NE(r.out.find("tps"), std::string::npos);
}

TEST(Cli, StandaloneBinaryReportsExitCodes) {
  const std::string bin = HCANET_CLI_PATH;
  EXPECT_EQ(WEXITSTATUS(std::system((bin + " --definitely-not-a-flag >/dev/null 2>&1").c_str())), kExitUsage);
  EXPECT_EQ(WEXITSTATUS(std::system((bin + " --help >/dev/null 2>&1").c_str())), kExitOk);
}

}  // namespace
}  // namespace hcanet::cli
