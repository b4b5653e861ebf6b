#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "catintell/baseline.hpp"
#include "catintell/trainer.hpp"
#include "doctest.h"
#include "test_util.hpp"
#include "tiny_configs.hpp"

using namespace catintell;
using catintell::testing::TempDir;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

// Runs the CLI with stdout and stderr captured together.
Run cli(const std::string& args) {
  const std::string cmd = std::string(CATINTELL_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  while (std::fgets(buf, sizeof(buf), pipe)) r.out += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("help lists every subcommand and its flags") {
  const Run top = cli("--help");
  CHECK(top.code == 0);
  for (const char* sub : {"make-toy", "train-quality", "train-syn", "synthesize", "train-res", "finetune-res",
                          "restore", "evaluate", "degrade-baseline"}) {
    CHECK(top.out.find(sub) != std::string::npos);
  }
  const Run restore = cli("restore --help");
  CHECK(restore.code == 0);
  for (const char* flag : {"--input", "--ckpt", "--output", "--seed", "--profile", "--config"}) {
    CHECK(restore.out.find(flag) != std::string::npos);
  }
  CHECK(cli("make-toy --help").out.find("--count") != std::string::npos);
}

TEST_CASE("usage errors exit 2, module errors exit 1") {
  CHECK(cli("").code == 2);
  CHECK(cli("frobnicate").code == 2);
  CHECK(cli("restore --input x").code == 2);
  CHECK(cli("make-toy --output x --count many").code == 2);
  TempDir dir("cli");
  const Run missing = cli("train-syn --data " + q(dir / "nowhere") + " --output " + q(dir / "run") + " --profile desk");
  CHECK(missing.code == 1);
  CHECK(missing.out.find("NotFound") != std::string::npos);
  CHECK(cli("make-toy --output " + q(dir / "t") + " --profile galactic").code == 2);
  std::ofstream(dir / "bad.json") << R"({"res": {"train": {"iterations": 0}}})";
  const Run bad = cli("train-res --pairs " + q(dir / "p.tsv") + " --output " + q(dir / "r") + " --config " +
                      q(dir / "bad.json"));
  CHECK(bad.code == 1);
  CHECK(bad.out.find("ConfigError") != std::string::npos);
}

TEST_CASE("make-toy is seeded and degrade-baseline writes matching files") {
  TempDir dir("cli");
  CHECK(cli("make-toy --output " + q(dir / "a") + " --count 10 --side 32 --holdout 2 --seed 4").code == 0);
  CHECK(cli("make-toy --output " + q(dir / "b") + " --count 10 --side 32 --holdout 2 --seed 4").code == 0);
  CHECK(cli("make-toy --output " + q(dir / "c") + " --count 10 --side 32 --seed 5").code == 0);
  CHECK(list_images(dir / "a" / "hq").size() == 10u);
  CHECK(list_images(dir / "a" / "cataract").size() == 30u);
  CHECK(list_images(dir / "a" / "holdout" / "degraded").size() == 2u);
  CHECK(slurp(dir / "a" / "cataract" / "toy_003_t2.png") == slurp(dir / "b" / "cataract" / "toy_003_t2.png"));
  CHECK(slurp(dir / "a" / "hq" / "toy_003.png") != slurp(dir / "c" / "hq" / "toy_003.png"));

  const Run d = cli("degrade-baseline --input " + q(dir / "a" / "hq") + " --output " + q(dir / "deg") +
                    " --t 0.5 --sigma 1 --light 1 1 1");
  CHECK(d.code == 0);
  CHECK(list_images(dir / "deg").size() == 10u);
  CHECK(cli("degrade-baseline --input " + q(dir / "a" / "hq") + " --output " + q(dir / "deg2") + " --t 3").code == 1);
}

TEST_CASE("restore and evaluate on a directory") {
  TempDir dir("cli");
  Rng rng(2);
  fs::create_directories(dir / "in");
  fs::create_directories(dir / "gt");
  for (int i = 0; i < 5; ++i) {
    const Image hq = render_toy_fundus(24 + 8 * i, rng);
    const std::string name = "img" + std::to_string(i) + ".png";
    save_image(hq, dir / "gt" / name);
    save_image(degrade_traditional(hq, toy_tiers()[0]), dir / "in" / name);
  }
  const PhaseConfig cfg = catintell::testing::tiny_phase("res", 10, 16);
  Rng ex_rng(1);
  auto ex = std::make_shared<FeatureExtractor>(catintell::testing::tiny_extractor(), ex_rng);
  ex->freeze();
  save_checkpoint(GanTrainer(Phase::Res, cfg, ex, 1).to_checkpoint(), dir / "res.ckpt");

  const Run r = cli("restore --input " + q(dir / "in") + " --ckpt " + q(dir / "res.ckpt") + " --output " + q(dir / "out"));
  CHECK(r.code == 0);
  const auto outs = list_images(dir / "out");
  REQUIRE(outs.size() == 5u);
  for (int i = 0; i < 5; ++i) {
    const Image a = load_image(dir / "in" / ("img" + std::to_string(i) + ".png"));
    const Image b = load_image(outs[i]);
    CHECK(outs[i].filename() == "img" + std::to_string(i) + ".png");
    CHECK(a.height == b.height);
    CHECK(a.width == b.width);
  }

  const Run e = cli("evaluate --pred " + q(dir / "out") + " --target " + q(dir / "gt"));
  CHECK(e.code == 0);
  CHECK(fs::exists(dir / "out" / "report.csv"));
  CHECK(fs::exists(dir / "out" / "report.txt"));
  std::ifstream csv(dir / "out" / "report.csv");
  int lines = 0;
  for (std::string line; std::getline(csv, line);) ++lines;
  CHECK(lines >= 6);

  fs::remove(dir / "gt" / "img2.png");
  const Run bad = cli("evaluate --pred " + q(dir / "out") + " --target " + q(dir / "gt") + " --output " + q(dir / "rep"));
  CHECK(bad.code == 1);
  CHECK(bad.out.find("PairingError") != std::string::npos);
}

TEST_CASE("config files are honoured and snapshotted") {
  TempDir dir("cli");
  CHECK(cli("make-toy --output " + q(dir / "toy") + " --count 10 --side 32").code == 0);
  const RunConfig rc = catintell::testing::tiny_run(4, 32, 16);
  json doc = rc;
  doc.erase("profile");
  std::ofstream(dir / "tiny.json") << doc.dump(2);
  const Run r = cli("train-syn --data " + q(dir / "toy") + " --output " + q(dir / "run") + " --config " +
                    q(dir / "tiny.json") + " --profile desk --seed 12");
  CHECK(r.code == 0);
  CHECK(fs::exists(dir / "run" / "syn.ckpt"));
  const json snap = json::parse(slurp(dir / "run" / "config.json"));
  CHECK(snap.at("seed").get<std::uint64_t>() == 12u);
  CHECK(snap.at("syn").at("train").at("iterations").get<int>() == 4);

  std::ofstream(dir / "typo.json") << R"({"syn": {"train": {"iterationz": 3}}})";
  const Run typo = cli("train-syn --data " + q(dir / "toy") + " --output " + q(dir / "run2") + " --config " +
                       q(dir / "typo.json"));
  CHECK(typo.code == 1);
  CHECK(typo.out.find("syn.train.iterationz") != std::string::npos);
}
