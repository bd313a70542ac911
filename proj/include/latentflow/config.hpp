#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "latentflow/datasets.hpp"
#include "latentflow/errors.hpp"
#include "latentflow/flow.hpp"
#include "latentflow/ode.hpp"
#include "latentflow/vae.hpp"

namespace latentflow {

struct AnalysisConfig {
  std::size_t probe_points = 11;  // uniform grid over [0, 1]
  std::size_t n_train = 512;
  std::size_t n_repeats = 5;
  double ridge_lambda = 1e-6;
  std::size_t n_probe_samples = 1024;
  std::size_t n_transfer = 100;
  std::size_t n_isolate = 100;
  int isolate_reference_class = 0;
  std::size_t n_roundtrip = 256;
  std::vector<std::size_t> roundtrip_steps{25, 50, 100, 200};
  std::size_t n_generate_per_class = 1000;
};

// Everything a run needs; a run is a pure function of (config, seed).
struct ExperimentConfig {
  std::string experiment;  // "gaussians2d" | "factors"
  std::uint64_t seed = 7;
  std::string out_dir;
  double train_fraction = 0.8;
  bool smoke = false;

  GaussianMixtureSpec gaussian;
  FactorDatasetSpec factor;
  VaeConfig vae;
  FlowConfig flow;
  FlowTrainConfig flow_train;
  IntegratorConfig integrator;
  AnalysisConfig analysis;

  static ExperimentConfig defaults_gaussians2d();
  static ExperimentConfig defaults_factors();

  // Parses, fills defaults for the chosen experiment, then validates.
  // Unknown keys and type mismatches raise ConfigError naming the field.
  static ExperimentConfig from_json_text(const std::string& text, const std::string& source);
  static ExperimentConfig from_json_file(const std::string& path);

  // Round-trippable echo of the configuration. out_dir is omitted so two
  // runs of the same experiment into different directories emit identical
  // artifacts.
  std::string to_json_text(int indent = -1) const;

  // Shrink every budget to CI scale.
  void apply_smoke();

  void validate() const;

  std::vector<double> probe_grid() const;
};

}  // namespace latentflow
