#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <map>

#include "test_util.hpp"

namespace {

namespace fs = std::filesystem;
using dgseg::testing::TempDir;

int run(const std::string& args) {
  const std::string cmd = std::string(DGSEG_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = dgseg::testing::read_file(e.path());
  return out;
}

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  TempDir dir("cli_usage");
  const std::string out = " --out " + (dir / "x").string();
  EXPECT_EQ(run("--set train.nope=1 toy-gen" + out), 2);
  EXPECT_EQ(run("--set model.feature_dim=\\\"wide\\\" toy-gen" + out), 2);
  EXPECT_EQ(run("toy-gen --count -3" + out), 2);
  EXPECT_EQ(run("train --iterations 1 --out " + (dir / "missing_root").string()), 2);
}

TEST(Cli, UnwritableOutputIsConfigError) {
  TempDir dir("cli_ro");
  std::ofstream(dir / "file") << "x";
  EXPECT_EQ(run("toy-gen --count 2 --out " + (dir / "file" / "sub").string()), 2);
}

TEST(Cli, ToyGenIsDeterministic) {
  TempDir dir("cli_toy");
  const std::string common = "--seed 4 --set toy.height=32 --set toy.width=32 --set toy.style_size=16 toy-gen --count 3";
  ASSERT_EQ(run(common + " --out " + (dir / "a").string()), 0);
  ASSERT_EQ(run(common + " --out " + (dir / "b").string()), 0);
  const auto a = tree(dir / "a"), b = tree(dir / "b");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, b);
  ASSERT_EQ(run("--seed 5 --set toy.height=32 --set toy.width=32 --set toy.style_size=16 toy-gen --count 3 --out " +
                (dir / "c").string()),
            0);
  EXPECT_NE(tree(dir / "c"), a);
}

TEST(Cli, TrainEvalMineAndPreview) {
  TempDir dir("cli_flow");
  const std::string data = (dir / "data").string();
  const std::string small = " --set toy.height=32 --set toy.width=32 --set toy.style_size=16";
  ASSERT_EQ(run("--seed 1" + small + " --set toy.style_paintings=1 --set toy.style_textures=1 toy-gen --count 3 --out " +
                data),
            0);
  const std::string ds = " --set dataset.root=" + data + " --set model.feature_dim=16";
  const std::string bank = (dir / "bank").string();
  ASSERT_EQ(run(ds + " --set styles.dir=" + data + "/styles --set styles.kind=fda --set styles.size=1" +
                " --set styles.pool_size=2 --set styles.bank_dir=" + bank + " build-bank"),
            0);
  EXPECT_TRUE(fs::exists(dir / "bank/bank.json"));

  const std::string run_dir = (dir / "run").string();
  ASSERT_EQ(run(ds + " --set styles.bank_dir=" + bank + " train --iterations 1 --out " + run_dir), 0);
  EXPECT_TRUE(fs::exists(dir / "run/last.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "run/metrics.tsv"));

  EXPECT_EQ(run(ds + " --set dataset.eval_split=train eval --checkpoint " + run_dir + "/last.ckpt --out " +
                (dir / "eval").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "eval/eval_report.json"));
  EXPECT_EQ(run(ds + " --set dataset.eval_split=train eval --out " + (dir / "eval0").string()), 0);
  EXPECT_EQ(run(ds + " eval --checkpoint " + run_dir + "/nope.ckpt --out " + (dir / "eval1").string()), 2);

  EXPECT_EQ(run(ds + " --set styles.bank_dir=" + bank + " --set preview_count=2 mine --out " +
                (dir / "mine").string()),
            0);
  std::ifstream in(dir / "mine/mining.jsonl");
  int lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  EXPECT_EQ(lines, 2);

  EXPECT_EQ(run(ds + " --set styles.bank_dir=" + bank + " --set preview_count=1 augment-preview --out " +
                (dir / "prev").string()),
            0);
  EXPECT_FALSE(tree(dir / "prev").empty());
}

TEST(Cli, RepeatedTrainRunsAreByteIdentical) {
  TempDir dir("cli_det");
  const std::string data = (dir / "data").string();
  ASSERT_EQ(run("--seed 2 --set toy.height=32 --set toy.width=32 --set toy.style_size=16 --set toy.style_paintings=1"
                " --set toy.style_textures=1 toy-gen --count 4 --out " + data),
            0);
  const std::string cfg = " --seed 3 --set dataset.root=" + data + " --set model.feature_dim=16 --set styles.dir=" + data +
                          "/styles --set styles.kind=fda --set styles.size=2 --set styles.pool_size=2 --set styles.bank_dir=" +
                          (dir / "bank").string();
  ASSERT_EQ(run(cfg + " build-bank"), 0);
  for (const char* name : {"a", "b"})
    ASSERT_EQ(run(cfg + " --set train.checkpoint_every=2 train --iterations 5 --out " + (dir / name).string()), 0);
  auto a = tree(dir / "a"), b = tree(dir / "b");
  ASSERT_TRUE(a.count("metrics.tsv") && a.count("last.ckpt"));
  // The resolved config records the run's own output directory.
  a.erase("config.json");
  b.erase("config.json");
  ASSERT_EQ(a.size(), b.size());
  for (const auto& [name, bytes] : a) EXPECT_TRUE(b.count(name) && b.at(name) == bytes) << name;
}

}  // namespace
