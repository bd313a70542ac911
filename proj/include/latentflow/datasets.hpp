#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "latentflow/rng.hpp"
#include "latentflow/tensor.hpp"

namespace latentflow {

// Four isotropic Gaussians in the plane with known class and distance labels.
struct GaussianMixtureSpec {
  std::array<std::array<double, 2>, 4> means{{{3.0, 3.0}, {3.0, -3.0}, {-3.0, 3.0}, {-3.0, -3.0}}};
  double covariance_scale = 0.5;
  std::size_t n_samples = 8192;
};

struct GaussianSample {
  std::array<double, 2> x{};
  int label = 0;
  double d = 0.0;  // Euclidean distance of x to its class mean
};

std::vector<GaussianSample> sample_gaussian_mixture(const GaussianMixtureSpec& spec, Rng& rng);

// Linear generative dataset with a categorical class factor and continuous
// r, g, b factors: x = A onehot(class) + B (r,g,b) + noise_scale * eta.
// A and B are drawn once from mixing_seed, i.i.d. standard normal, then
// column-normalized so every factor carries comparable energy.
struct FactorDatasetSpec {
  std::size_t n_samples = 8192;
  int n_classes = 10;
  double rgb_low = 0.05;
  double rgb_high = 0.95;
  std::size_t observation_dim = 32;
  std::uint64_t mixing_seed = 20240601;
  double noise_scale = 0.05;
};

struct FactorSample {
  std::vector<double> x;
  int label = 0;
  double r = 0.0, g = 0.0, b = 0.0;
};

struct FactorDataset {
  FactorDatasetSpec spec;
  Tensor mixing_class;  // A: (observation_dim, n_classes)
  Tensor mixing_rgb;    // B: (observation_dim, 3)
  std::vector<FactorSample> samples;
};

// Throws if observation_dim < n_classes + 3, which would make [A|B] rank
// deficient and the factors unrecoverable.
FactorDataset sample_factor_dataset(const FactorDatasetSpec& spec, Rng& rng);

Tensor mixing_class_matrix(const FactorDatasetSpec& spec);
Tensor mixing_rgb_matrix(const FactorDatasetSpec& spec);

// Stacks sample observations into an (n, dim) matrix.
Tensor gaussian_matrix(const std::vector<GaussianSample>& samples);
Tensor factor_matrix(const std::vector<FactorSample>& samples);

// CSV bodies per the repo's export formats. `comments` lines are written
// verbatim with a leading '#' before the header row.
void write_gaussian_csv(const std::string& path, const std::vector<GaussianSample>& samples,
                        const std::vector<std::string>& comments);
void write_factor_csv(const std::string& path, const std::vector<FactorSample>& samples,
                      const std::vector<std::string>& comments);

}  // namespace latentflow
