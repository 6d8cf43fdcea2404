#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "cli.hpp"
#include "polypseg/data.hpp"

namespace fs = std::filesystem;
using namespace polypseg;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "polypseg");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  fs::path dir;
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("polypseg_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  std::string p(const std::string& name) const { return (dir / name).string(); }
};

std::string read(const fs::path& f) { return detail::read_file(f); }

}  // namespace

TEST_F(CliTest, HelpExitsZero) {
  auto r = run_cli({"--help"});
  EXPECT_EQ(r.code, cli::kExitOk);
  EXPECT_NE(r.out.find("synth"), std::string::npos);
  EXPECT_EQ(run_cli({"train", "--help"}).code, cli::kExitOk);
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli({}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"synth", "--out", p("d"), "--bogus"}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"train"}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"train", "--data", p("d"), "--variant", "resnet"}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"train", "--data", p("d"), "--size", "50"}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"synth", "--out", p("d"), "--n", "2"}).code, cli::kExitUsage);
}

TEST_F(CliTest, SynthIsDeterministic) {
  ASSERT_EQ(run_cli({"synth", "--n", "10", "--size", "16", "--seed", "3", "--out", p("a")}).code, cli::kExitOk);
  ASSERT_EQ(run_cli({"synth", "--n", "10", "--size", "16", "--seed", "3", "--out", p("b")}).code, cli::kExitOk);
  EXPECT_EQ(read(dir / "a" / "manifest.tsv"), read(dir / "b" / "manifest.tsv"));
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    EXPECT_EQ(read(e.path()), read(dir / "b" / fs::relative(e.path(), dir / "a"))) << e.path();
  }
  EXPECT_EQ(files, 21u);
  const auto d = read_dataset(dir / "a");
  EXPECT_EQ(d.train.size(), 8u);
  EXPECT_EQ(d.val.size(), 1u);
}

TEST_F(CliTest, MissingOrCorruptInputsExitThree) {
  EXPECT_EQ(run_cli({"train", "--data", p("nowhere"), "--size", "32"}).code, cli::kExitData);
  EXPECT_EQ(run_cli({"eval", "--data", p("nowhere"), "--ckpt", p("none.ckpt")}).code, cli::kExitData);
  std::ofstream(dir / "junk.ckpt") << "junk";
  auto r = run_cli({"predict", "--ckpt", p("junk.ckpt"), "--image", p("x.ppm")});
  EXPECT_EQ(r.code, cli::kExitData);
  EXPECT_FALSE(r.err.empty());
}

TEST_F(CliTest, TrainEvalPredictFlow) {
  ASSERT_EQ(run_cli({"synth", "--n", "10", "--size", "40", "--out", p("data")}).code, cli::kExitOk);
  auto tr = run_cli({"train", "--data", p("data"), "--size", "32", "--epochs", "2", "--batch-size", "4", "--lr", "1e-3",
                     "--ckpt", p("m.ckpt"), "--history", p("h.csv")});
  ASSERT_EQ(tr.code, cli::kExitOk) << tr.err;
  EXPECT_NE(tr.out.find("epoch 2"), std::string::npos);
  EXPECT_NE(tr.out.find("test dice"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "m.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "m.ckpt.last"));

  auto rs = run_cli({"train", "--data", p("data"), "--size", "32", "--epochs", "3", "--lr", "1e-3", "--ckpt",
                     p("m.ckpt"), "--history", p("h.csv"), "--resume"});
  ASSERT_EQ(rs.code, cli::kExitOk) << rs.err;
  EXPECT_NE(rs.out.find("epoch 3"), std::string::npos);
  EXPECT_EQ(rs.out.find("epoch 1 "), std::string::npos);
  std::istringstream hist(read(dir / "h.csv"));
  std::size_t rows = 0;
  for (std::string l; std::getline(hist, l);) ++rows;
  EXPECT_EQ(rows, 4u);
  EXPECT_EQ(run_cli({"train", "--data", p("data"), "--size", "32", "--variant", "no_mspp", "--ckpt", p("m.ckpt"),
                     "--resume"})
                .code,
            cli::kExitUsage);

  auto ev = run_cli({"eval", "--ckpt", p("m.ckpt"), "--data", p("data"), "--split", "all", "--xor-maps", p("xor")});
  ASSERT_EQ(ev.code, cli::kExitOk) << ev.err;
  EXPECT_TRUE(ev.out.starts_with("image_id,dice"));
  EXPECT_NE(ev.out.find("\nMACRO,"), std::string::npos);
  std::size_t maps = 0;
  for (const auto& e : fs::directory_iterator(dir / "xor")) {
    EXPECT_TRUE(e.path().string().ends_with("_xor.pgm"));
    const auto m = read_mask(e.path());
    EXPECT_EQ(m.height, 32u);
    ++maps;
  }
  EXPECT_EQ(maps, 10u);

  ASSERT_EQ(run_cli({"eval", "--ckpt", p("m.ckpt"), "--data", p("data"), "--out", p("metrics.csv")}).code,
            cli::kExitOk);
  EXPECT_TRUE(read(dir / "metrics.csv").starts_with("image_id,"));

  const auto d = read_dataset(dir / "data");
  write_image(dir / "in.ppm", d.test.front().image);
  auto pr = run_cli({"predict", "--ckpt", p("m.ckpt"), "--image", p("in.ppm"), "--out", p("mask.pgm"), "--prob",
                     p("prob.pgm")});
  ASSERT_EQ(pr.code, cli::kExitOk) << pr.err;
  const auto mask = read_mask(dir / "mask.pgm");
  EXPECT_EQ(mask.height, 40u);
  EXPECT_EQ(mask.width, 40u);
  EXPECT_EQ(read_image(dir / "prob.pgm").height, 40u);
}

TEST_F(CliTest, GradcheckPrintsTableAndPasses) {
  auto r = run_cli({"gradcheck", "--seed", "5", "--coords-per-param", "2"});
  EXPECT_EQ(r.code, cli::kExitOk) << r.out;
  EXPECT_NE(r.out.find("conv"), std::string::npos);
  EXPECT_NE(r.out.find("model_full_params"), std::string::npos);
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}
