#include <gtest/gtest.h>
#include <json.hpp>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "imputeformer/data.hpp"

namespace {

namespace fs = std::filesystem;
using imputeformer::data::load_csv;
using imputeformer::data::load_mask_csv;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("imputeformer_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // Exit status of the binary; stdout and stderr are captured to files.
  int run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + (env.empty() ? "" : " ") + IMPUTEFORMER_CLI + std::string(" ") + args + " >" +
                            path("stdout.txt") + " 2>" + path("stderr.txt");
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string slurp(const std::string& name) const {
    std::ifstream in(path(name), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  // The JSON error is the last stderr line; logs may precede it.
  nlohmann::json error_json() const {
    std::string text = slurp("stderr.txt");
    while (!text.empty() && text.back() == '\n') text.pop_back();
    return nlohmann::json::parse(text.substr(text.rfind('\n') + 1));
  }

  void write(const std::string& name, const std::string& text) const { std::ofstream(path(name)) << text; }

  // Small dataset, point mask and a tiny run config.
  void tiny_pipeline(const std::string& train_extra = "") {
    ASSERT_EQ(run("synth --nodes 6 --steps 240 --rank 2 --seed 4 -o " + path("data.csv")), 0);
    ASSERT_EQ(run("mask --pattern point --rate 0.3 --seed 5 -i " + path("data.csv") + " -o " + path("mask.csv")), 0);
    write("run.json", R"({"data": "data.csv", "mask": "mask.csv", "seed": 6,
      "model": {"window": 12, "input_hidden": 4, "node_embed_total": 24, "node_embed_key_dim": 3,
                "model_dim": 8, "projected_dim": 3, "n_layers": 1, "ffn_hidden": 8},
      "train": {"max_epochs": 2, "batch": 4)" + train_extra + "}}");
  }

  fs::path dir_;
};

TEST_F(Cli, SynthIsByteIdenticalUnderFixedSeed) {
  ASSERT_EQ(run("synth --nodes 5 --steps 100 --rank 2 --seed 9 -o " + path("a.csv")), 0);
  ASSERT_EQ(run("synth --nodes 5 --steps 100 --rank 2 --seed 9 -o " + path("b.csv")), 0);
  EXPECT_EQ(slurp("a.csv"), slurp("b.csv"));
  const auto manifest = nlohmann::json::parse(slurp("a.csv.manifest.json"));
  EXPECT_EQ(manifest.at("seed"), 9);
  EXPECT_EQ(manifest.at("rank"), 2);
}

TEST_F(Cli, SeedEnvironmentVariableOverridesFlag) {
  ASSERT_EQ(run("synth --nodes 4 --steps 50 --seed 1 --rank 2 -o " + path("a.csv"), "IMPUTEFORMER_SEED=77"), 0);
  ASSERT_EQ(run("synth --nodes 4 --steps 50 --seed 77 --rank 2 -o " + path("b.csv")), 0);
  EXPECT_EQ(slurp("a.csv"), slurp("b.csv"));
  EXPECT_EQ(run("synth --nodes 4 --steps 50 -o " + path("c.csv"), "IMPUTEFORMER_SEED=x1"), 3);
}

TEST_F(Cli, EvalOfTruthAgainstItselfIsZero) {
  ASSERT_EQ(run("synth --nodes 4 --steps 60 --rank 2 -o " + path("d.csv")), 0);
  ASSERT_EQ(run("mask --rate 0.5 -i " + path("d.csv") + " -o " + path("m.csv")), 0);
  ASSERT_EQ(run("eval --pred " + path("d.csv") + " --truth " + path("d.csv") + " --mask " + path("m.csv")), 0);
  const auto j = nlohmann::json::parse(slurp("stdout.txt"));
  EXPECT_EQ(j.at("mae"), 0.0);
  EXPECT_EQ(j.at("rmse"), 0.0);
  EXPECT_GT(j.at("count").get<int>(), 0);
}

TEST_F(Cli, TrainImputeKeepsObservedCellsAndWritesSideFiles) {
  tiny_pipeline();
  ASSERT_EQ(run("train -c " + path("run.json") + " -o " + path("m.ckpt")), 0) << slurp("stderr.txt");
  for (const char* f : {"m.ckpt", "m.ckpt.config.json", "m.ckpt.history.csv", "m.ckpt.metrics.csv"})
    EXPECT_TRUE(fs::exists(path(f))) << f;
  EXPECT_EQ(slurp("m.ckpt.history.csv").substr(0, 36), "epoch,train_recon,train_fil,val_mae\n");
  EXPECT_EQ(slurp("m.ckpt.metrics.csv").substr(0, 21), "step,recon,fil,total\n");
  // The resolved config is itself a valid run config.
  const auto resolved = nlohmann::json::parse(slurp("m.ckpt.config.json"));
  EXPECT_EQ(resolved.at("train").at("lr"), 1e-3);
  EXPECT_EQ(resolved.at("model").at("n_nodes"), 6);

  ASSERT_EQ(run("impute -m " + path("m.ckpt") + " -i " + path("data.csv") + " --mask " + path("mask.csv") + " -o " +
                path("imp.csv")),
            0)
      << slurp("stderr.txt");
  const auto truth = load_csv(path("data.csv"));
  const auto imp = load_csv(path("imp.csv"));
  const auto mask = load_mask_csv(path("mask.csv"));
  ASSERT_TRUE(imp.available.all());
  for (Eigen::Index i = 0; i < truth.nodes(); ++i)
    for (Eigen::Index t = 0; t < truth.steps(); ++t)
      if (mask(i, t)) ASSERT_EQ(imp.values(i, t), truth.values(i, t));

  EXPECT_EQ(run("impute -m " + path("m.ckpt") + " -i " + path("data.csv") + " -o " + path("w.csv") + " --window 24"), 3);
  EXPECT_EQ(run("impute -m " + path("m.ckpt") + " -i " + path("data.csv") + " -o " + path("w.csv") +
                " --window 24 --sliding"),
            0);
}

TEST_F(Cli, LambdaSweepWritesTable) {
  tiny_pipeline();
  auto j = nlohmann::json::parse(slurp("run.json"));
  j["lambda_sweep"] = {0.0, 0.1};
  j["train"]["max_epochs"] = 1;
  write("run.json", j.dump());
  ASSERT_EQ(run("train -c " + path("run.json") + " -o " + path("s.ckpt")), 0) << slurp("stderr.txt");
  const std::string table = slurp("s.ckpt.sweep.csv");
  EXPECT_TRUE(table.starts_with("lambda,best_val_mae,best_epoch\n0,")) << table;
  EXPECT_NE(table.find("\n0.10000000000000001,"), std::string::npos);
}

TEST_F(Cli, ConfigErrorsExitWithThreeAndJson) {
  tiny_pipeline();
  write("bad.json", R"({"data": "data.csv", "surprise": true})");
  EXPECT_EQ(run("train -c " + path("bad.json") + " -o " + path("x.ckpt")), 3);
  const auto err = error_json();
  EXPECT_EQ(err.at("error"), "config");
  EXPECT_NE(err.at("message").get<std::string>().find("surprise"), std::string::npos);

  write("lr.json", R"({"data": "data.csv", "model": {"n_nodes": 6}, "train": {"lr": 0}})");
  EXPECT_EQ(run("train -c " + path("lr.json") + " -o " + path("x.ckpt")), 3);
  write("wh.json", R"({"data": "data.csv", "missing": {"whiten": {"mode": "fixed", "rate": 0}}})");
  EXPECT_EQ(run("train -c " + path("wh.json") + " -o " + path("x.ckpt")), 3);
  write("mk.json", R"({"data": "data.csv", "train": {"momentum": 0.9}})");
  EXPECT_EQ(run("train -c " + path("mk.json") + " -o " + path("x.ckpt")), 3);
  EXPECT_EQ(run("eval --pred " + path("nope.csv") + " --truth " + path("data.csv") + " --mask " + path("mask.csv")), 3);
  EXPECT_EQ(run("frobnicate"), 3);
}

TEST_F(Cli, DivergenceExitsWithTwoAndKeepsLastGoodCheckpoint) {
  tiny_pipeline(R"(, "lr": 1e300, "grad_clip": 0)");
  EXPECT_EQ(run("train -c " + path("run.json") + " -o " + path("n.ckpt")), 2);
  const auto err = error_json();
  EXPECT_EQ(err.at("error"), "numeric_abort");
  EXPECT_TRUE(fs::exists(path("n.ckpt.last_good")));
  EXPECT_FALSE(fs::exists(path("n.ckpt")));
}

TEST_F(Cli, BaselinesShareTheMaskPipeline) {
  tiny_pipeline();
  for (const char* b : {"mean", "linear", "als"}) {
    ASSERT_EQ(run(std::string("impute --baseline ") + b + " --rank 2 -i " + path("data.csv") + " --mask " +
                  path("mask.csv") + " -o " + path("b.csv")),
              0)
        << b << slurp("stderr.txt");
    ASSERT_EQ(run("eval --pred " + path("b.csv") + " --truth " + path("data.csv") + " --mask " + path("mask.csv") +
                  " --split test"),
              0);
    EXPECT_GT(nlohmann::json::parse(slurp("stdout.txt")).at("mae").get<double>(), 0.0) << b;
  }
}

TEST_F(Cli, SpectrumListsEveryValue) {
  ASSERT_EQ(run("synth --nodes 5 --steps 40 --rank 2 --noise 0 -o " + path("d.csv")), 0);
  ASSERT_EQ(run("spectrum -i " + path("d.csv") + " -o " + path("sv.csv")), 0);
  std::istringstream in(slurp("sv.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "index,singular_value,cumulative_energy");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 5);
}

TEST_F(Cli, BenchPrintsTable) {
  ASSERT_EQ(run("bench --attention spatial --sizes 16,32 --reps 1"), 0);
  std::istringstream in(slurp("stdout.txt"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "size,factorized_ms,canonical_ms");
  std::getline(in, line);
  EXPECT_EQ(line.substr(0, 3), "16,");
}

}  // namespace
