#include "latentflow/datasets.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "latentflow/rng.hpp"

using namespace latentflow;

TEST_SUITE_BEGIN("datasets");

namespace {

// Dense Gaussian elimination with partial pivoting; test-side oracle for the
// least-squares inversion check.
std::vector<double> solve_dense(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    }
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double acc = b[i];
    for (std::size_t j = i + 1; j < n; ++j) acc -= a[i][j] * x[j];
    x[i] = acc / a[i][i];
  }
  return x;
}

}  // namespace

TEST_CASE("per-class empirical means match the spec means at n = 4000") {
  GaussianMixtureSpec spec;
  spec.n_samples = 4000;
  Rng rng(101);
  auto samples = sample_gaussian_mixture(spec, rng);

  std::array<std::array<double, 2>, 4> sums{};
  std::array<int, 4> counts{};
  for (const auto& s : samples) {
    sums[s.label][0] += s.x[0];
    sums[s.label][1] += s.x[1];
    counts[s.label]++;
  }
  for (int c = 0; c < 4; ++c) {
    REQUIRE(counts[c] > 0);
    for (int k = 0; k < 2; ++k) {
      const double mean = sums[c][k] / counts[c];
      CHECK(std::abs(mean - spec.means[c][k]) < 0.1);
      // Convergence bound from the module contract.
      CHECK(std::abs(mean - spec.means[c][k]) < 3.0 * std::sqrt(0.5 / counts[c]));
    }
  }
}

TEST_CASE("per-class covariance is within 15% of 0.5 I at n = 4000") {
  GaussianMixtureSpec spec;
  spec.n_samples = 4000;
  Rng rng(55);
  auto samples = sample_gaussian_mixture(spec, rng);

  for (int c = 0; c < 4; ++c) {
    double n = 0, mx = 0, my = 0;
    for (const auto& s : samples) {
      if (s.label != c) continue;
      n += 1;
      mx += s.x[0];
      my += s.x[1];
    }
    mx /= n;
    my /= n;
    double cxx = 0, cyy = 0, cxy = 0;
    for (const auto& s : samples) {
      if (s.label != c) continue;
      cxx += (s.x[0] - mx) * (s.x[0] - mx);
      cyy += (s.x[1] - my) * (s.x[1] - my);
      cxy += (s.x[0] - mx) * (s.x[1] - my);
    }
    cxx /= n - 1;
    cyy /= n - 1;
    cxy /= n - 1;
    CHECK(std::abs(cxx - 0.5) < 0.075);
    CHECK(std::abs(cyy - 0.5) < 0.075);
    CHECK(std::abs(cxy) < 0.075);
  }
}

TEST_CASE("zero covariance collapses every sample onto its class mean") {
  GaussianMixtureSpec spec;
  spec.covariance_scale = 0.0;
  spec.n_samples = 64;
  Rng rng(7);
  for (const auto& s : sample_gaussian_mixture(spec, rng)) {
    CHECK(s.x[0] == spec.means[s.label][0]);
    CHECK(s.x[1] == spec.means[s.label][1]);
    CHECK(s.d == 0.0);
  }
}

TEST_CASE("stored d equals the distance to the class mean") {
  GaussianMixtureSpec spec;
  spec.n_samples = 500;
  Rng rng(13);
  for (const auto& s : sample_gaussian_mixture(spec, rng)) {
    const double dx = s.x[0] - spec.means[s.label][0];
    const double dy = s.x[1] - spec.means[s.label][1];
    CHECK(s.d == doctest::Approx(std::hypot(dx, dy)).epsilon(1e-15));
  }
}

TEST_CASE("noiseless factors invert exactly through [A|B] least squares") {
  FactorDatasetSpec spec;
  spec.n_samples = 20;
  spec.noise_scale = 0.0;
  Rng rng(19);
  FactorDataset ds = sample_factor_dataset(spec, rng);

  const std::size_t dim = spec.observation_dim;
  const std::size_t k = static_cast<std::size_t>(spec.n_classes) + 3;
  // Columns of the stacked design [A|B].
  auto col = [&](std::size_t j, std::size_t i) {
    return j < static_cast<std::size_t>(spec.n_classes) ? ds.mixing_class.at(i, j)
                                                        : ds.mixing_rgb.at(i, j - spec.n_classes);
  };

  std::vector<std::vector<double>> gram(k, std::vector<double>(k, 0.0));
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t q = 0; q < k; ++q) {
      double acc = 0.0;
      for (std::size_t i = 0; i < dim; ++i) acc += col(p, i) * col(q, i);
      gram[p][q] = acc;
    }
  }

  for (const auto& s : ds.samples) {
    std::vector<double> rhs(k, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      double acc = 0.0;
      for (std::size_t i = 0; i < dim; ++i) acc += col(p, i) * s.x[i];
      rhs[p] = acc;
    }
    const auto coeffs = solve_dense(gram, rhs);
    for (int c = 0; c < spec.n_classes; ++c) {
      const double want = c == s.label ? 1.0 : 0.0;
      CHECK(std::abs(coeffs[static_cast<std::size_t>(c)] - want) < 1e-8);
    }
    CHECK(std::abs(coeffs[k - 3] - s.r) < 1e-8);
    CHECK(std::abs(coeffs[k - 2] - s.g) < 1e-8);
    CHECK(std::abs(coeffs[k - 1] - s.b) < 1e-8);
  }
}

TEST_CASE("mean of r over 10k samples is 0.5 within 0.02") {
  FactorDatasetSpec spec;
  spec.n_samples = 10000;
  Rng rng(23);
  FactorDataset ds = sample_factor_dataset(spec, rng);
  double acc = 0.0;
  for (const auto& s : ds.samples) acc += s.r;
  CHECK(std::abs(acc / ds.samples.size() - 0.5) < 0.02);
}

TEST_CASE("factors are mutually uncorrelated and uncorrelated with class at n = 10k") {
  FactorDatasetSpec spec;
  spec.n_samples = 10000;
  Rng rng(29);
  FactorDataset ds = sample_factor_dataset(spec, rng);

  auto corr = [&](auto fa, auto fb) {
    double ma = 0, mb = 0;
    for (const auto& s : ds.samples) {
      ma += fa(s);
      mb += fb(s);
    }
    ma /= ds.samples.size();
    mb /= ds.samples.size();
    double cab = 0, caa = 0, cbb = 0;
    for (const auto& s : ds.samples) {
      cab += (fa(s) - ma) * (fb(s) - mb);
      caa += (fa(s) - ma) * (fa(s) - ma);
      cbb += (fb(s) - mb) * (fb(s) - mb);
    }
    return cab / std::sqrt(caa * cbb);
  };

  auto fr = [](const FactorSample& s) { return s.r; };
  auto fg = [](const FactorSample& s) { return s.g; };
  auto fb_ = [](const FactorSample& s) { return s.b; };
  auto fc = [](const FactorSample& s) { return static_cast<double>(s.label); };
  CHECK(std::abs(corr(fr, fg)) < 0.05);
  CHECK(std::abs(corr(fr, fb_)) < 0.05);
  CHECK(std::abs(corr(fg, fb_)) < 0.05);
  CHECK(std::abs(corr(fr, fc)) < 0.05);
  CHECK(std::abs(corr(fg, fc)) < 0.05);
  CHECK(std::abs(corr(fb_, fc)) < 0.05);
}

TEST_CASE("sampling is a pure function of spec and rng state") {
  FactorDatasetSpec spec;
  spec.n_samples = 128;
  Rng r1(77), r2(77);
  FactorDataset a = sample_factor_dataset(spec, r1);
  FactorDataset b = sample_factor_dataset(spec, r2);
  REQUIRE(a.samples.size() == b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].x == b.samples[i].x);
    CHECK(a.samples[i].label == b.samples[i].label);
    CHECK(a.samples[i].b == b.samples[i].b);
  }

  GaussianMixtureSpec gspec;
  gspec.n_samples = 128;
  Rng g1(78), g2(78);
  auto ga = sample_gaussian_mixture(gspec, g1);
  auto gb = sample_gaussian_mixture(gspec, g2);
  for (std::size_t i = 0; i < ga.size(); ++i) {
    CHECK(ga[i].x == gb[i].x);
    CHECK(ga[i].d == gb[i].d);
  }
}

TEST_CASE("mixing matrices depend only on the mixing seed") {
  FactorDatasetSpec spec;
  spec.n_samples = 4;
  Rng r1(1), r2(2);
  FactorDataset a = sample_factor_dataset(spec, r1);
  FactorDataset b = sample_factor_dataset(spec, r2);
  CHECK(a.mixing_class == b.mixing_class);
  CHECK(a.mixing_rgb == b.mixing_rgb);
  CHECK(a.mixing_class == mixing_class_matrix(spec));
  CHECK(a.mixing_rgb == mixing_rgb_matrix(spec));
}

TEST_CASE("too-small observation_dim is rejected") {
  FactorDatasetSpec spec;
  spec.observation_dim = 12;
  Rng rng(3);
  CHECK_THROWS_AS(sample_factor_dataset(spec, rng), std::invalid_argument);
}

TEST_SUITE_END();
