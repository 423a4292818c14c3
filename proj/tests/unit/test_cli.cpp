#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "sdg/app/settings.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int status = -1;
  std::string out;
};

// Runs the CLI with stderr folded into the captured output.
Run run_cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " SDG_CLI_PATH " " + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf;
  for (std::size_t n; (n = std::fread(buf.data(), 1, buf.size(), p)) > 0;) r.out.append(buf.data(), n);
  const int st = pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("sdg_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Cli, ParsePrintsSpans) {
  const auto r = run_cli("parse \"a red square and a blue circle\"");
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(r.out, "a red square\t1\t4\na blue circle\t5\t8\n");
}

TEST(Cli, ErrorsAreOneLine) {
  for (const std::string args : {"parse x --set nope=1", "generate \"\"", "generate x --mode fancy",
                                 "parse \"a red car\" --parser tree --tree /nonexistent.tree"}) {
    const auto r = run_cli(args);
    EXPECT_EQ(r.status, 1) << args;
    EXPECT_EQ(r.out.rfind("sdg: error: ", 0), 0u) << r.out;
    EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 1) << r.out;
  }
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli("").status, 2);
  EXPECT_EQ(run_cli("generate").status, 2);
  EXPECT_EQ(run_cli("frobnicate").status, 2);
  EXPECT_EQ(run_cli("--help").status, 0);
}

TEST(Cli, PrintConfigReflectsOverrides) {
  const auto r = run_cli("generate x --steps 7 --mode mk --seed 3 --set gen.scale=2 --print-config");
  EXPECT_EQ(r.status, 0);
  const auto c = sdg::KvConfig::from_string(r.out);
  EXPECT_EQ(c.get("gen.steps"), "7");
  EXPECT_EQ(c.get("gen.mode"), "mk");
  EXPECT_EQ(c.get("seed"), "3");
  EXPECT_EQ(c.get("gen.scale"), "2");
  EXPECT_EQ(c.entries().size(), sdg::app::default_settings("").entries().size());
}

TEST(Cli, DefaultConfigFileMatchesBuiltins) {
  const auto a = run_cli("generate x --print-config");
  const auto b = run_cli("generate x --print-config --config " SDG_DATA_DIR "/../configs/default.conf");
  EXPECT_EQ(a.status, 0);
  EXPECT_EQ(a.out, b.out);
}

TEST(Cli, GenerateIsThreadIndependent) {
  const auto dir = scratch("threads");
  const std::string args = "generate \"a red square and a blue circle\" --mode mv --steps 4 --dump-attn --out ";
  ASSERT_EQ(run_cli(args + (dir / "t1").string(), "SDG_THREADS=1").status, 0);
  ASSERT_EQ(run_cli(args + (dir / "t3").string(), "SDG_THREADS=3").status, 0);
  for (const char* f : {"image.png", "z0.sdgt", "manifest.json", "attn/layer2_step3.sdgt"})
    EXPECT_EQ(slurp(dir / "t1" / f), slurp(dir / "t3" / f)) << f;
  EXPECT_FALSE(slurp(dir / "t1" / "image.png").empty());
}

TEST(Cli, AblateFullMatchesGenerate) {
  const auto dir = scratch("ablate");
  const std::string prompt = "\"a green circle and a white triangle\"";
  ASSERT_EQ(run_cli("generate " + prompt + " --mode mv --steps 4 --seed 5 --out " + (dir / "g").string()).status, 0);
  const auto r = run_cli("ablate " + prompt + " --mode mv --steps 4 --seed 5 --seeds 1 --padding-pattern full,no-pad --out " +
                         (dir / "a").string());
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_EQ(slurp(dir / "g" / "image.png"), slurp(dir / "a" / "realign_full" / "seed5.png"));
  EXPECT_TRUE(fs::exists(dir / "a" / "realign_no-pad" / "seed5.png"));
  EXPECT_NE(slurp(dir / "a" / "ablation.tsv").find("realign\tfull\t5\t1.000000"), std::string::npos);
}

TEST(Cli, MakeCc500AndAbc) {
  const auto dir = scratch("bench_files");
  const auto r = run_cli("make-cc500 -n 4 --out -");
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 4);
  const auto a = run_cli("make-abc --captions " SDG_DATA_DIR "/abc_sample.txt --out " + (dir / "abc.tsv").string());
  EXPECT_EQ(a.status, 0);
  EXPECT_EQ(a.out, "107 pairs, 61 skipped, 32 duplicates\n");
  const auto text = slurp(dir / "abc.tsv");
  EXPECT_EQ(text.rfind("a brown bench in front of a white building\ta white bench in front of a brown building\t1\t7\n", 0),
            0u);
}

TEST(Cli, TrainWritesCheckpointUsableByGenerate) {
  const auto dir = scratch("train");
  const auto t = run_cli("train --steps 2 --batch 2 --size 8 --set train.eval_batch=2 --set train.log_every=1 --out " +
                         (dir / "m").string());
  ASSERT_EQ(t.status, 0) << t.out;
  EXPECT_EQ(slurp(dir / "m" / "train_log.tsv").substr(0, 26), "step\ttrain_loss\teval_loss\n");
  const auto g = run_cli("generate \"a red square\" --steps 2 --checkpoint " + (dir / "m" / "model.sdgw").string() +
                         " --out " + (dir / "g").string());
  EXPECT_EQ(g.status, 0) << g.out;
  EXPECT_TRUE(fs::exists(dir / "g" / "image.png"));
}
