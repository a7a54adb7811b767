#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

struct Result {
  int status = -1;
  std::string out;
  // Run directory: the last line printed by commands that create one.
  std::string last_line() const {
    auto s = out;
    while (!s.empty() && s.back() == '\n') s.pop_back();
    return s.substr(s.rfind('\n') == std::string::npos ? 0 : s.rfind('\n') + 1);
  }
};

Result run(const std::string& args) {
  const std::string cmd = std::string(VRULAB_CLI) + " " + args + " 2>/dev/null";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) r.out += buf;
  const int st = pclose(pipe);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  static fs::path root() {
    static const fs::path r = [] {
      auto p = fs::temp_directory_path() / ("vrulab_cli_test_" + std::to_string(getpid()));
      fs::remove_all(p);
      fs::create_directories(p);
      return p;
    }();
    return r;
  }
  static std::string out(const std::string& name) { return " --out " + (root() / name).string(); }
};

}  // namespace

TEST_F(Cli, GenIsByteIdenticalAcrossRuns) {
  const auto a = run("gen --seed 7 --quota 2=100,3=100" + out("a"));
  const auto b = run("gen --seed 7 --quota 2=100,3=100" + out("b"));
  ASSERT_EQ(a.status, 0);
  ASSERT_EQ(b.status, 0);
  EXPECT_EQ(fs::path(a.last_line()).filename(), fs::path(b.last_line()).filename());
  for (const char* f : {"episodes.jsonl", "manifest.json", "config.json"}) {
    EXPECT_EQ(slurp(fs::path(a.last_line()) / f), slurp(fs::path(b.last_line()) / f)) << f;
  }
  const auto c = run("gen --seed 8 --quota 2=100,3=100" + out("a"));
  EXPECT_NE(c.last_line(), a.last_line());
}

TEST_F(Cli, ConfigFileAndOverrides) {
  const auto cfg = root() / "gen.json";
  std::ofstream(cfg) << R"({"seed": 7, "quota": "2=100,3=100"})";
  const auto from_file = run("gen --config " + cfg.string() + out("cfg"));
  const auto flags = run("gen --seed 7 --quota 2=100,3=100" + out("cfg"));
  ASSERT_EQ(from_file.status, 0);
  EXPECT_EQ(from_file.last_line(), flags.last_line());
  const auto overridden = run("gen --config " + cfg.string() + " --seed 9" + out("cfg"));
  EXPECT_NE(overridden.last_line(), flags.last_line());
  EXPECT_NE(slurp(fs::path(overridden.last_line()) / "config.json").find("\"9\""), std::string::npos);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("frobnicate").status, 2);
  EXPECT_EQ(run("gen --bogus-flag").status, 2);
  EXPECT_EQ(run("gen --quota 2=abc" + out("err")).status, 2);
  EXPECT_EQ(run("eval --dataset /nonexistent.jsonl --predictions /nonexistent.jsonl" + out("err")).status, 2);
  EXPECT_EQ(run("bridge-eval --bridge /nonexistent/bridge --model m --dataset " +
                (fs::path(run("gen --quota 2=3" + out("err")).last_line()) / "episodes.jsonl").string() + out("err"))
                .status,
            3);
}

// One small end-to-end pass over every command.
TEST_F(Cli, PipelineSmoke) {
  const auto data = fs::path(run("gen --seed 3 --quota 2=40,3=40" + out("pipe")).last_line()) / "episodes.jsonl";
  ASSERT_TRUE(fs::exists(data));
  const std::string model_flags =
      " --layers 2 --heads 2 --d-model 16 --d-ff 32 --quota 2=60,3=20 --heldout-quota 2=20,3=20 --epochs 1 --echo 20";
  const auto tr = run("train" + model_flags + out("pipe"));
  ASSERT_EQ(tr.status, 0) << tr.out;
  const fs::path trained = tr.last_line();
  const auto ckpt = (trained / "model.bin").string();
  for (const char* f : {"model.bin", "model.bin.vocab.json", "train_log.csv", "timing.csv", "heldout.csv", "control.txt",
                        "config.json"}) {
    EXPECT_TRUE(fs::exists(trained / f)) << f;
  }
  const auto again = run("train" + model_flags + out("pipe2"));
  EXPECT_EQ(slurp(trained / "model.bin"), slurp(fs::path(again.last_line()) / "model.bin"));
  EXPECT_EQ(slurp(trained / "train_log.csv"), slurp(fs::path(again.last_line()) / "train_log.csv"));

  const auto pa = run("patch --checkpoint " + ckpt + " --pairs-from " + data.string() +
                      " --mode direct --max-pairs 6 --attention 2" + out("pipe"));
  ASSERT_EQ(pa.status, 0);
  const fs::path patched = pa.last_line();
  for (const char* f : {"causal_map.json", "pairs.csv", "causal_map.svg", "attention.json", "attention.svg"}) {
    EXPECT_TRUE(fs::exists(patched / f)) << f;
  }
  const auto map = (patched / "causal_map.json").string();
  const auto ab = run("ablate --checkpoint " + ckpt + " --map " + map + " --dataset " + data.string() +
                      " --k 0,1,2 --random-seeds 1,2 --save-heads 0.1" + out("pipe"));
  ASSERT_EQ(ab.status, 0);
  EXPECT_NE(ab.out.find("K,topk_acc,random_mean,random_std"), std::string::npos);
  EXPECT_TRUE(fs::exists(fs::path(ab.last_line()) / "ablated.bin"));

  const auto pr = run("probe --checkpoint " + ckpt + " --dataset " + data.string() +
                      " --target all --seeds 0 --probe-epochs 20 --export-dump" + out("pipe"));
  ASSERT_EQ(pr.status, 0);
  const auto dump = (fs::path(pr.last_line()) / "representations.vruh").string();
  const auto pr_dump = run("probe --dump " + dump + " --dataset " + data.string() +
                           " --target all --seeds 0 --probe-epochs 20" + out("pipe"));
  ASSERT_EQ(pr_dump.status, 0);
  EXPECT_EQ(slurp(fs::path(pr.last_line()) / "sweep.csv"), slurp(fs::path(pr_dump.last_line()) / "sweep.csv"));

  const auto sf = run("sft --checkpoint " + ckpt + " --map " + map + " --train " + data.string() + " --eval " +
                      data.string() + " --mode both --k 1 --control-size 10 --batch 8" + out("pipe"));
  ASSERT_EQ(sf.status, 0);
  EXPECT_NE(sf.out.find("selective,"), std::string::npos);
  EXPECT_NE(sf.out.find("full,"), std::string::npos);

  const auto be = run("bridge-eval --bridge " + std::string(VRULAB_FAKE_BRIDGE) + " --model oracle --dataset " +
                      data.string() + " --probe" + out("pipe"));
  ASSERT_EQ(be.status, 0);
  const fs::path bridged = be.last_line();
  EXPECT_NE(be.out.find("100.00"), std::string::npos);
  EXPECT_TRUE(fs::exists(bridged / "hidden.vruh"));
  const auto ev = run("eval --dataset " + data.string() + " --predictions " + (bridged / "predictions.jsonl").string() +
                      out("pipe"));
  ASSERT_EQ(ev.status, 0);
  EXPECT_EQ(run("report " + (bridged / "report.csv").string()).status, 0);
}
