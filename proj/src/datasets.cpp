#include "latentflow/datasets.hpp"

#include <cmath>
#include <stdexcept>

#include "latentflow/io.hpp"

namespace latentflow {

std::vector<GaussianSample> sample_gaussian_mixture(const GaussianMixtureSpec& spec, Rng& rng) {
  if (spec.n_samples == 0) throw std::invalid_argument("gaussian mixture: n_samples must be > 0");
  if (spec.covariance_scale < 0.0) {
    throw std::invalid_argument("gaussian mixture: covariance_scale must be >= 0");
  }
  const double sigma = std::sqrt(spec.covariance_scale);
  std::vector<GaussianSample> out(spec.n_samples);
  for (auto& s : out) {
    s.label = static_cast<int>(rng.uniform_index(4));
    const auto& mean = spec.means[static_cast<std::size_t>(s.label)];
    const double dx = sigma * rng.normal();
    const double dy = sigma * rng.normal();
    s.x = {mean[0] + dx, mean[1] + dy};
    s.d = std::hypot(dx, dy);
  }
  return out;
}

namespace {

Tensor column_normalized_gaussian(Shape shape, Rng& rng) {
  Tensor m(std::move(shape));
  rng.fill_normal(m);
  const std::size_t rows = m.rows(), cols = m.cols();
  for (std::size_t j = 0; j < cols; ++j) {
    double norm = 0.0;
    for (std::size_t i = 0; i < rows; ++i) norm += m.at(i, j) * m.at(i, j);
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < rows; ++i) m.at(i, j) /= norm;
  }
  return m;
}

void check_factor_spec(const FactorDatasetSpec& spec) {
  if (spec.observation_dim < static_cast<std::size_t>(spec.n_classes) + 3) {
    throw std::invalid_argument(
        "factor dataset: observation_dim must be >= n_classes + 3 (= " +
        std::to_string(spec.n_classes + 3) + ") so the mixing matrix has full column rank, got " +
        std::to_string(spec.observation_dim));
  }
  if (spec.n_classes < 2) throw std::invalid_argument("factor dataset: need >= 2 classes");
  if (spec.noise_scale < 0.0) throw std::invalid_argument("factor dataset: noise_scale < 0");
}

}  // namespace

Tensor mixing_class_matrix(const FactorDatasetSpec& spec) {
  Rng rng(spec.mixing_seed);
  return column_normalized_gaussian(
      Shape{spec.observation_dim, static_cast<std::size_t>(spec.n_classes)}, rng);
}

Tensor mixing_rgb_matrix(const FactorDatasetSpec& spec) {
  Rng rng(spec.mixing_seed);
  // Skip the class block so both matrices come from one deterministic stream.
  Tensor skip(Shape{spec.observation_dim, static_cast<std::size_t>(spec.n_classes)});
  rng.fill_normal(skip);
  return column_normalized_gaussian(Shape{spec.observation_dim, 3}, rng);
}

FactorDataset sample_factor_dataset(const FactorDatasetSpec& spec, Rng& rng) {
  check_factor_spec(spec);
  if (spec.n_samples == 0) throw std::invalid_argument("factor dataset: n_samples must be > 0");

  FactorDataset ds;
  ds.spec = spec;
  {
    Rng mix_rng(spec.mixing_seed);
    ds.mixing_class = column_normalized_gaussian(
        Shape{spec.observation_dim, static_cast<std::size_t>(spec.n_classes)}, mix_rng);
    ds.mixing_rgb = column_normalized_gaussian(Shape{spec.observation_dim, 3}, mix_rng);
  }

  const std::size_t dim = spec.observation_dim;
  ds.samples.resize(spec.n_samples);
  for (auto& s : ds.samples) {
    s.label = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(spec.n_classes)));
    s.r = rng.uniform(spec.rgb_low, spec.rgb_high);
    s.g = rng.uniform(spec.rgb_low, spec.rgb_high);
    s.b = rng.uniform(spec.rgb_low, spec.rgb_high);
    s.x.assign(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) {
      double v = ds.mixing_class.at(i, static_cast<std::size_t>(s.label));
      v += ds.mixing_rgb.at(i, 0) * s.r + ds.mixing_rgb.at(i, 1) * s.g +
           ds.mixing_rgb.at(i, 2) * s.b;
      if (spec.noise_scale > 0.0) v += spec.noise_scale * rng.normal();
      s.x[i] = v;
    }
  }
  return ds;
}

Tensor gaussian_matrix(const std::vector<GaussianSample>& samples) {
  Tensor m(Shape{samples.size(), 2});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    m.at(i, 0) = samples[i].x[0];
    m.at(i, 1) = samples[i].x[1];
  }
  return m;
}

Tensor factor_matrix(const std::vector<FactorSample>& samples) {
  const std::size_t dim = samples.front().x.size();
  Tensor m(Shape{samples.size(), dim});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t j = 0; j < dim; ++j) m.at(i, j) = samples[i].x[j];
  }
  return m;
}

void write_gaussian_csv(const std::string& path, const std::vector<GaussianSample>& samples,
                        const std::vector<std::string>& comments) {
  CsvWriter csv(path, comments, {"x0", "x1", "class", "d"});
  for (const auto& s : samples) {
    csv.cell(s.x[0]).cell(s.x[1]).cell(s.label).cell(s.d);
    csv.end_row();
  }
}

void write_factor_csv(const std::string& path, const std::vector<FactorSample>& samples,
                      const std::vector<std::string>& comments) {
  const std::size_t dim = samples.empty() ? 0 : samples.front().x.size();
  std::vector<std::string> header;
  header.reserve(dim + 4);
  for (std::size_t j = 0; j < dim; ++j) header.push_back("x" + std::to_string(j));
  header.insert(header.end(), {"class", "r", "g", "b"});
  CsvWriter csv(path, comments, header);
  for (const auto& s : samples) {
    for (double v : s.x) csv.cell(v);
    csv.cell(s.label).cell(s.r).cell(s.g).cell(s.b);
    csv.end_row();
  }
}

}  // namespace latentflow
