#include <gtest/gtest.h>

#include <cstdlib>
#include <sys/wait.h>

#include "airid/checkpoint.hpp"
#include "airid/synthdata.hpp"
#include "support/pipeline.hpp"

using namespace airid;
using namespace airid::testing;

namespace {

int shell_exit(const std::string& command) {
  const int status = std::system((command + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, PipelineWritesArtifacts) {
  TempDir dir("cli_pipeline");
  write_json(dir / "config.json", small_run_config());
  const auto r = run_pipeline(dir.path(), dir / "config.json");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("rank1"), std::string::npos);

  for (const char* f : {"data/images.bin", "data/attributes.tsv", "data/split.json", "data/manifest.synth.json",
                        "pre/pretrained.airc", "pre/training_log.csv", "run/model.airc", "run/training_log.csv",
                        "run/report.json", "run/report.csv", "run/rankings.tsv", "run/cmc.svg",
                        "run/manifest.eval.json"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  const auto report = read_json(dir / "run/report.json");
  EXPECT_EQ(report.at("variant"), "full");
  EXPECT_EQ(report.at("num_queries"), 4);
  EXPECT_EQ(report.at("gallery_size"), 16u);
  EXPECT_EQ(report.at("cmc").size(), 16u);
  EXPECT_EQ(report.at("metrics").at("rank1"), report.at("cmc")[0]);
  EXPECT_EQ(report.at("checkpoint_crc32"), crc32_hex(read_file_bytes(dir / "run/model.airc")));

  const auto manifest = read_json(dir / "run/manifest.train.json");
  for (const char* k : {"command", "argv", "config", "seed", "source_revision", "inputs", "outputs",
                        "checkpoint_crc32", "started_at", "finished_at"}) {
    EXPECT_TRUE(manifest.contains(k)) << k;
  }
  EXPECT_EQ(manifest.at("checkpoint_crc32").at("model.airc"), report.at("checkpoint_crc32"));

  // Training log: header plus one row per epoch of both stages.
  const auto log = read_text(dir / "run/training_log.csv");
  EXPECT_EQ(log.substr(0, log.find('\n')), log_header());
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 1 + 3);
}

TEST(Cli, RepeatedPipelineIsReproducible) {
  TempDir a("cli_rep_a"), b("cli_rep_b");
  write_json(a / "config.json", small_run_config());
  write_json(b / "config.json", small_run_config());
  ASSERT_EQ(run_pipeline(a.path(), a / "config.json").code, 0);
  ASSERT_EQ(run_pipeline(b.path(), b / "config.json").code, 0);
  EXPECT_EQ(read_text(a / "data/images.bin"), read_text(b / "data/images.bin"));
  EXPECT_EQ(read_text(a / "run/model.airc"), read_text(b / "run/model.airc"));
  EXPECT_EQ(read_json(a / "run/report.json").at("metrics"), read_json(b / "run/report.json").at("metrics"));
}

TEST(Cli, FlagsOverrideConfigFile) {
  TempDir dir("cli_flags");
  write_json(dir / "config.json", small_run_config());
  const std::string cfg = (dir / "config.json").string();
  ASSERT_EQ(run_airid({"synth", "--config", cfg, "--seed", "99", "--out", (dir / "data").string()}).code, 0);
  EXPECT_EQ(read_json(dir / "data/manifest.synth.json").at("config").at("synth").at("seed"), 99);
  EXPECT_EQ(read_json(dir / "data/manifest.synth.json").at("config").at("train").at("seed"), 4);
  ASSERT_EQ(run_airid({"train", "--config", cfg, "--data", (dir / "data").string(), "--variant", "no-adv",
                       "--lambda-g", "0.5", "--out", (dir / "run").string()})
                .code,
            0);
  const auto config = read_json(dir / "run/manifest.train.json").at("config").at("train");
  EXPECT_EQ(config.at("variant"), "no-adv");
  EXPECT_EQ(config.at("lambda_G"), 0.5);
  EXPECT_EQ(config.at("joint_epochs"), 3);
  // Without --init, train pretrains first and keeps the result.
  EXPECT_TRUE(fs::exists(dir / "run/pretrained.airc"));
}

TEST(Cli, ExitCodes) {
  TempDir dir("cli_exit");
  write_json(dir / "config.json", small_run_config());
  const std::string cfg = (dir / "config.json").string();
  const std::string data = (dir / "data").string();
  ASSERT_EQ(run_airid({"synth", "--config", cfg, "--out", data}).code, kExitOk);

  const auto no_ckpt = run_airid({"eval", "--config", cfg, "--data", data, "--out", (dir / "empty").string()});
  EXPECT_EQ(no_ckpt.code, kExitData);
  EXPECT_NE(no_ckpt.err.find("model.airc"), std::string::npos);

  auto bad = small_run_config();
  bad["train"]["lamda_G"] = 0.1;
  write_json(dir / "bad.json", bad);
  const auto unknown = run_airid({"train", "--config", (dir / "bad.json").string(), "--data", data, "--out",
                                  (dir / "x").string()});
  EXPECT_EQ(unknown.code, kExitUsage);
  EXPECT_NE(unknown.err.find("lamda_G"), std::string::npos);

  EXPECT_EQ(run_airid({}).code, kExitUsage);
  EXPECT_EQ(run_airid({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(run_airid({"train", "--data", data}).code, kExitUsage);
  EXPECT_EQ(run_airid({"train", "--data", data, "--variant", "gan", "--out", (dir / "y").string()}).code, kExitUsage);
  EXPECT_EQ(run_airid({"--help"}).code, kExitOk);

  // A corrupted dataset is a data error.
  const auto bytes = read_text(dir / "data/images.bin");
  std::ofstream(dir / "data/images.bin", std::ios::binary | std::ios::trunc) << bytes.substr(0, bytes.size() / 2);
  EXPECT_EQ(run_airid({"pretrain", "--config", cfg, "--data", data, "--out", (dir / "z").string()}).code, kExitData);
}

TEST(Cli, BinaryReportsExitCodes) {
  TempDir dir("cli_binary");
  const std::string bin = AIRID_BINARY;
  EXPECT_EQ(shell_exit(bin + " --help"), 0);
  EXPECT_EQ(shell_exit(bin + " eval --data " + (dir / "missing").string() + " --out " + (dir / "o").string()), 2);
  EXPECT_EQ(shell_exit(bin + " nonsense"), 1);
}

TEST(Cli, NonFiniteDataExitsWithNumericCode) {
  TempDir dir("cli_numeric");
  auto cfg = small_run_config();
  write_json(dir / "config.json", cfg);
  const std::string data = (dir / "data").string();
  ASSERT_EQ(run_airid({"synth", "--config", (dir / "config.json").string(), "--out", data}).code, 0);
  auto split = read_dataset(data);
  split.train.front().image.pixels.assign(split.train.front().image.pixels.size(), std::numeric_limits<float>::infinity());
  write_dataset(data, split);
  const auto r =
      run_airid({"pretrain", "--config", (dir / "config.json").string(), "--data", data, "--out", (dir / "p").string()});
  EXPECT_EQ(r.code, kExitNumeric) << r.err;
}

TEST(Cli, AblateSweepAndReport) {
  TempDir dir("cli_ablate");
  write_json(dir / "config.json", small_run_config());
  const std::string cfg = (dir / "config.json").string();
  const std::string data = (dir / "data").string();
  ASSERT_EQ(run_airid({"synth", "--config", cfg, "--out", data}).code, 0);
  const auto ab = run_airid({"ablate", "--config", cfg, "--data", data, "--variants", "no-sc,full", "--out",
                             (dir / "ablate").string()});
  ASSERT_EQ(ab.code, 0) << ab.err;
  const auto table = read_text(dir / "ablate/ablation.csv");
  EXPECT_EQ(table.substr(0, table.find('\n')), "variant,rank1,rank5,rank10,mAP");
  EXPECT_LT(table.find("\nno-sc,"), table.find("\nfull,"));
  EXPECT_EQ(read_json(dir / "ablate/no-sc/report.json").at("variant"), "no-sc");
  EXPECT_TRUE(fs::exists(dir / "ablate/pretrained.airc"));

  const auto sw = run_airid({"sweep", "--config", cfg, "--data", data, "--param", "lambda_D", "--values", "0.5,1",
                             "--init", (dir / "ablate/pretrained.airc").string(), "--out", (dir / "sweep").string()});
  ASSERT_EQ(sw.code, 0) << sw.err;
  const auto csv = read_text(dir / "sweep/sweep.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_NE(csv.find("\nlambda_D,0.5,"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "sweep/sweep_lambda_D.svg"));

  fs::create_directories(dir / "not_a_run");
  const auto rep = run_airid({"report", "--out", (dir / "report").string(), (dir / "ablate").string(),
                              (dir / "sweep").string(), (dir / "not_a_run").string()});
  ASSERT_EQ(rep.code, 0) << rep.err;
  EXPECT_NE(rep.err.find("not_a_run"), std::string::npos);
  const auto comparison = read_text(dir / "report/comparison.csv");
  // Sorted by variant name.
  EXPECT_LT(comparison.find("\nfull,"), comparison.find("\nno-sc,"));
  EXPECT_TRUE(fs::exists(dir / "report/cmc.svg"));
  EXPECT_TRUE(fs::exists(dir / "report/sweep_lambda_D.svg"));

  EXPECT_EQ(run_airid({"report", "--out", (dir / "r2").string(), (dir / "not_a_run").string()}).code, kExitData);
}
