#include "latentflow/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "cli.hpp"
#include "doctest.h"
#include "latentflow/io.hpp"

using namespace latentflow;

TEST_SUITE_BEGIN("pipeline");

namespace {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() / ("latentflow_pipe_" + tag);
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

ExperimentConfig smoke_gaussians(const std::string& out) {
  ExperimentConfig cfg = ExperimentConfig::defaults_gaussians2d();
  cfg.apply_smoke();
  cfg.out_dir = out;
  return cfg;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"latentflow"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST_CASE("smoke run emits the full artifact set") {
  TempDir dir("artifacts");
  Pipeline pipeline(smoke_gaussians(dir.file("g")));
  pipeline.run_all();

  for (const char* name :
       {"dataset_train.csv", "dataset_test.csv", "flow.ckpt", "flow_loss.csv",
        "trajectories_conditional.csv", "trajectories_unconditional.csv",
        "probe_conditional.csv", "probe_unconditional.csv", "pca_t1.csv",
        "pca_t0_conditional.csv", "pca_t0_unconditional.csv", "metrics_flow.json",
        "metrics_invert.json", "metrics_probe.json", "summary.json"}) {
    INFO(name);
    CHECK(std::filesystem::exists(std::filesystem::path(dir.file("g")) / name));
  }

  const std::string summary = read_text_file(dir.file("g") + "/summary.json");
  CHECK(summary.find("\"missing_stages\": []") != std::string::npos);
  CHECK(summary.find("\"seed\": 7") != std::string::npos);

  // CSV artifacts are self-describing.
  const std::string probe_csv = read_text_file(dir.file("g") + "/probe_conditional.csv");
  CHECK(probe_csv.find("# experiment=gaussians2d seed=7") != std::string::npos);
  CHECK(probe_csv.rfind("# config=", 0) == std::string::npos);  // second comment line
  CHECK(probe_csv.find("t,target,r2_mean,r2_std,flow_kind") != std::string::npos);
}

TEST_CASE("identical config and seed give byte-identical artifacts") {
  TempDir dir("determinism");
  Pipeline a(smoke_gaussians(dir.file("a")));
  a.run_all();
  Pipeline b(smoke_gaussians(dir.file("b")));
  b.run_all();
  for (const char* name : {"summary.json", "probe_conditional.csv", "flow_loss.csv",
                           "trajectories_unconditional.csv", "flow.ckpt"}) {
    INFO(name);
    CHECK(read_text_file(dir.file("a") + "/" + name) ==
          read_text_file(dir.file("b") + "/" + name));
  }
}

TEST_CASE("stages resume from checkpoints in a fresh process") {
  TempDir dir("resume");
  const std::string out = dir.file("r");
  {
    Pipeline train(smoke_gaussians(out));
    train.train_flow_stage();
  }
  {
    // New pipeline object: must reload flow.ckpt rather than retrain.
    Pipeline analyze(smoke_gaussians(out));
    analyze.invert_stage();
    analyze.probe_stage();
    analyze.report_stage();
  }
  const std::string summary = read_text_file(out + "/summary.json");
  CHECK(summary.find("class_structure_t1") != std::string::npos);

  // Compare against the single-process path: metrics must match exactly.
  TempDir dir2("resume_ref");
  Pipeline full(smoke_gaussians(dir2.file("f")));
  full.run_all();
  CHECK(read_text_file(out + "/metrics_probe.json") ==
        read_text_file(dir2.file("f") + "/metrics_probe.json"));
}

TEST_CASE("analysis stages without checkpoints explain what to run") {
  TempDir dir("missing");
  Pipeline pipeline(smoke_gaussians(dir.file("m")));
  try {
    pipeline.probe_stage();
    FAIL("expected throw");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("train-flow") != std::string::npos);
  }
}

TEST_CASE("cli maps outcomes to exit codes") {
  TempDir dir("cli");

  SUBCASE("missing config file") {
    CHECK(run_cli({"run", "--config", dir.file("absent.json")}) == 2);
  }

  SUBCASE("invalid config content") {
    write_text_file(dir.file("bad.json"), R"({"experiment": "nope"})");
    CHECK(run_cli({"run", "--config", dir.file("bad.json")}) == 2);
  }

  SUBCASE("field-level validation error") {
    write_text_file(dir.file("bad2.json"),
                    R"({"experiment": "gaussians2d", "integrator": {"n_steps": 7}})");
    CHECK(run_cli({"run", "--config", dir.file("bad2.json")}) == 2);
  }

  SUBCASE("numeric blowup exits 3") {
    write_text_file(dir.file("explode.json"),
                    R"({"experiment": "gaussians2d", "flow": {"steps": 40, "lr": 1e200}})");
    CHECK(run_cli({"train-flow", "--config", dir.file("explode.json"), "--out",
                   dir.file("x"), "--smoke"}) == 3);
  }

  SUBCASE("successful smoke run exits 0 and honors --seed") {
    write_text_file(dir.file("ok.json"), R"({"experiment": "gaussians2d"})");
    CHECK(run_cli({"run", "--config", dir.file("ok.json"), "--out", dir.file("out1"),
                   "--seed", "11", "--smoke"}) == 0);
    const std::string summary = read_text_file(dir.file("out1") + "/summary.json");
    CHECK(summary.find("\"seed\": 11") != std::string::npos);
  }
}

TEST_SUITE_END();
