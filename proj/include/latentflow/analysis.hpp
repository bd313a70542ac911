#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "latentflow/flow.hpp"
#include "latentflow/ode.hpp"
#include "latentflow/rng.hpp"
#include "latentflow/tensor.hpp"
#include "latentflow/vae.hpp"

namespace latentflow {

// ---- linear probes ---------------------------------------------------------

struct RidgeFit {
  std::vector<double> weights;
  double intercept = 0.0;

  double predict_row(const Tensor& X, std::size_t row) const;
  std::vector<double> predict(const Tensor& X) const;
};

// Centered ridge regression in closed form. With lambda = 0 a singular
// normal matrix raises an error instructing a nonzero ridge_lambda.
RidgeFit ridge_fit(const Tensor& X, const std::vector<double>& y, double lambda);

// 1 - SS_res / SS_tot with SS_tot taken about the mean of y.
double r2_score(const std::vector<double>& y, const std::vector<double>& y_hat);

struct ProbeReport {
  std::vector<double> times;
  std::vector<std::string> targets;
  Tensor r2_mean;  // (n_times, n_targets)
  Tensor r2_std;   // sample std over the probe repeats
  std::string flow_kind;

  double mean_at(double time, const std::string& target) const;
};

// The probing protocol: at each grid time, draw n_train samples at random,
// fit a ridge probe per target on the trajectory state at that time, report
// test R^2 on the held-out remainder, and repeat n_repeats times for
// mean/std. The trajectory must be a batch trajectory whose grid contains
// every probe time.
ProbeReport linear_probe_r2(const Trajectory& traj,
                            const std::vector<std::pair<std::string, std::vector<double>>>& targets,
                            const std::vector<double>& probe_grid, std::size_t n_train,
                            std::size_t n_repeats, double ridge_lambda,
                            const std::string& flow_kind, Rng& rng);

// ---- class structure -------------------------------------------------------

// Multinomial logistic regression on standardized features, trained
// full-batch with Adam. Deterministic given inputs.
struct LogisticModel {
  Tensor w;  // (d + 1, n_classes); last row is the bias
  std::vector<double> feature_mean;
  std::vector<double> feature_std;
  int n_classes = 0;

  std::vector<int> predict(const Tensor& X) const;
  double accuracy(const Tensor& X, const std::vector<int>& y) const;
};

LogisticModel fit_logistic(const Tensor& X, const std::vector<int>& y, int n_classes,
                           std::size_t iterations = 400, double lr = 0.1);

// Test accuracy of a logistic probe on a fixed 70/30 split drawn from rng.
// Throws if fewer than two classes are present.
double class_structure_score(const Tensor& latents, const std::vector<int>& labels, Rng& rng);

// ---- latent surgery --------------------------------------------------------

// encode -> conditional inversion with cond_src -> forward generation with
// cond_tgt -> decode. cond_src must not be the null token.
Tensor style_transfer(const VaeModel& vae, const FlowModel& flow, const Tensor& x,
                      const Conditioning& cond_src, const Conditioning& cond_tgt,
                      const IntegratorConfig& config);

// Batch variant over rows of X.
Tensor style_transfer_batch(const VaeModel& vae, const FlowModel& flow, const Tensor& X,
                            const std::vector<Conditioning>& cond_src,
                            const std::vector<Conditioning>& cond_tgt,
                            const IntegratorConfig& config);

struct ResidualReport {
  Tensor reconstruction;             // decode(encode(x).mu)
  Tensor conditional_regeneration;   // decode(generate(invert_uncond(z), cond_reference))
  Tensor residual;                   // reconstruction - conditional_regeneration, exactly
  double norm_reconstruction = 0.0;
  double norm_regeneration = 0.0;
  double norm_residual = 0.0;
};

// encode -> unconditional inversion -> conditional regeneration under the
// reference conditioning -> decode both, report the residual.
ResidualReport feature_isolation_residual(const VaeModel& vae, const FlowModel& flow,
                                          const Tensor& x, const Conditioning& cond_reference,
                                          const IntegratorConfig& config);

// ---- diagnostics -----------------------------------------------------------

struct PcaResult {
  Tensor coords;      // (n, k)
  Tensor components;  // (d, k), orthonormal columns by descending eigenvalue
  std::vector<double> explained_variance;
  std::vector<double> explained_variance_ratio;
  std::vector<double> mean;
};

// Centered PCA via eigendecomposition of the covariance. Throws if k exceeds
// the data rank or there are fewer than k + 1 samples.
PcaResult pca_project(const Tensor& latents, std::size_t k);

}  // namespace latentflow
