#include "cli.hpp"

#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "latentflow/config.hpp"
#include "latentflow/errors.hpp"
#include "latentflow/pipeline.hpp"

namespace latentflow {

namespace {

struct CliArgs {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool smoke = false;
};

void add_common(CLI::App* cmd, CliArgs& args) {
  cmd->add_option("--config", args.config_path, "experiment configuration (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", args.out_dir, "output directory (overrides the config)");
  cmd->add_option("--seed", args.seed, "seed (overrides the config)")
      ->each([&args](const std::string&) { args.seed_set = true; });
  cmd->add_flag("--smoke", args.smoke, "tiny budgets for CI smoke runs");
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"latent flow disentanglement experiments"};
  app.require_subcommand(1);

  CliArgs args;
  const char* const stage_names[] = {"run",   "train-vae", "train-flow", "invert",
                                     "probe", "transfer",  "isolate",    "report"};
  const char* const stage_help[] = {
      "full pipeline: train, invert, probe, transfer, isolate, report",
      "train the VAE and write vae.ckpt",
      "train the flow model and write flow.ckpt",
      "integrate conditional/unconditional trajectories and round trips",
      "linear probes, class-structure scores, and PCA projections",
      "style transfer on held-out samples",
      "feature-isolation residuals",
      "merge stage metrics into summary.json"};
  for (std::size_t i = 0; i < 8; ++i) {
    add_common(app.add_subcommand(stage_names[i], stage_help[i]), args);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    ExperimentConfig cfg = ExperimentConfig::from_json_file(args.config_path);
    if (args.seed_set) cfg.seed = args.seed;
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    if (args.smoke) {
      cfg.apply_smoke();
      cfg.validate();
    }

    Pipeline pipeline(cfg);
    const std::string stage = app.get_subcommands().front()->get_name();
    if (stage == "run") {
      pipeline.run_all();
    } else if (stage == "train-vae") {
      pipeline.train_vae_stage();
    } else if (stage == "train-flow") {
      pipeline.train_flow_stage();
    } else if (stage == "invert") {
      pipeline.invert_stage();
    } else if (stage == "probe") {
      pipeline.probe_stage();
    } else if (stage == "transfer") {
      pipeline.transfer_stage();
    } else if (stage == "isolate") {
      pipeline.isolate_stage();
    } else if (stage == "report") {
      pipeline.report_stage();
    }
    std::cout << "done: " << stage << " -> " << pipeline.config().out_dir << "\n";
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace latentflow
