#pragma once

#include <optional>
#include <string>
#include <vector>

#include "latentflow/analysis.hpp"
#include "latentflow/checkpoint.hpp"
#include "latentflow/config.hpp"
#include "latentflow/datasets.hpp"
#include "latentflow/flow.hpp"
#include "latentflow/ode.hpp"
#include "latentflow/vae.hpp"

namespace latentflow {

// Experiment driver. Stages can run in one process (run_all shares state) or
// one at a time across processes: anything a later stage needs is either
// recomputed deterministically from (config, seed) or loaded from the
// checkpoints an earlier stage wrote into out_dir.
//
// Artifacts written into out_dir:
//   dataset_train.csv / dataset_test.csv
//   vae.ckpt, vae_loss.csv                (factors)
//   flow.ckpt, flow_loss.csv
//   trajectories_conditional.csv / trajectories_unconditional.csv
//   probe_conditional.csv / probe_unconditional.csv
//   pca_t1.csv, pca_t0_conditional.csv, pca_t0_unconditional.csv
//   transfer.csv, residuals.csv           (factors)
//   metrics_<stage>.json, summary.json
class Pipeline {
 public:
  explicit Pipeline(ExperimentConfig config);

  void run_all();

  void train_vae_stage();
  void train_flow_stage();
  void invert_stage();
  void probe_stage();
  void transfer_stage();
  void isolate_stage();
  void report_stage();

  const ExperimentConfig& config() const { return cfg_; }
  std::string out_path(const std::string& name) const;

  // Accessors used by the acceptance suite; they lazily load or recompute.
  const VaeModel& vae();
  const FlowModel& flow();
  const Trajectory& conditional_trajectory();
  const Trajectory& unconditional_trajectory();

  struct ProbeSet {
    Tensor latents;  // (n, latent) at t = 1
    std::vector<int> labels;
    std::vector<double> r, g, b;  // factors only
    std::vector<double> d;        // gaussians only
    std::vector<Conditioning> conds;
  };
  const ProbeSet& probe_set();

 private:
  ExperimentConfig cfg_;
  std::string header_echo_;

  bool data_ready_ = false;
  std::vector<GaussianSample> gauss_samples_;
  FactorDataset factor_data_;
  std::vector<std::size_t> train_idx_, test_idx_;

  std::optional<VaeModel> vae_;
  std::optional<FlowModel> flow_;
  std::optional<ProbeSet> probe_set_;
  std::optional<Trajectory> traj_cond_, traj_uncond_;

  bool is_factors() const { return cfg_.experiment == "factors"; }
  void prepare_data();
  std::vector<std::string> csv_comments() const;

  Tensor observations(const std::vector<std::size_t>& idx) const;
  Tensor latents(const std::vector<std::size_t>& idx);
  Conditioning conditioning_for(std::size_t sample_idx) const;

  void write_trajectory_csv(const std::string& path, const Trajectory& traj);
  void write_probe_csv(const std::string& path, const ProbeReport& report);
  void write_pca_csv(const std::string& path, const Tensor& latents,
                     const std::vector<int>& labels);
  void write_metrics(const std::string& stage, const std::string& json_text);
};

}  // namespace latentflow
