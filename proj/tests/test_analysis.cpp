#include "latentflow/analysis.hpp"

#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "latentflow/rng.hpp"
#include "test_util.hpp"

using namespace latentflow;
using testutil::random_tensor;

TEST_SUITE_BEGIN("analysis");

namespace {

// Constant-state batch trajectory over the standard probe grid.
Trajectory constant_trajectory(const Tensor& state) {
  Trajectory traj;
  traj.direction = FlowDirection::backward;
  for (int i = 10; i >= 0; --i) {
    traj.times.push_back(static_cast<double>(i) / 10.0);
    traj.states.push_back(state);
  }
  return traj;
}

std::vector<double> probe_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 10; ++i) g.push_back(static_cast<double>(i) / 10.0);
  return g;
}

}  // namespace

TEST_CASE("ridge_fit recovers a known linear rule") {
  Rng rng(1);
  Tensor X = random_tensor(Shape{200, 3}, rng);
  std::vector<double> y(200);
  for (std::size_t i = 0; i < 200; ++i) {
    y[i] = 3.0 * X.at(i, 0) - 2.0 * X.at(i, 1) + 1.0;
  }
  RidgeFit fit = ridge_fit(X, y, 1e-6);
  CHECK(fit.weights[0] == doctest::Approx(3.0).epsilon(1e-5));
  CHECK(fit.weights[1] == doctest::Approx(-2.0).epsilon(1e-5));
  CHECK(std::abs(fit.weights[2]) < 1e-5);
  CHECK(fit.intercept == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(r2_score(y, fit.predict(X)) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("singular design with lambda = 0 raises an instructive error") {
  Tensor X(Shape{4, 2}, {1, 1, 2, 2, 3, 3, 4, 4});  // duplicated column
  std::vector<double> y{1, 2, 3, 4};
  try {
    ridge_fit(X, y, 0.0);
    FAIL("expected throw");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("ridge_lambda") != std::string::npos);
  }
  CHECK_NOTHROW(ridge_fit(X, y, 1e-6));
}

TEST_CASE("probe R2 is 1 for a target equal to a latent coordinate") {
  Rng rng(2);
  Tensor state = random_tensor(Shape{64, 4}, rng);
  Trajectory traj = constant_trajectory(state);
  std::vector<double> target(64);
  for (std::size_t i = 0; i < 64; ++i) target[i] = state.at(i, 2);

  Rng probe_rng(3);
  ProbeReport report =
      linear_probe_r2(traj, {{"coord", target}}, probe_grid(), 32, 3, 1e-6, "conditional", probe_rng);
  REQUIRE(report.times.size() == 11);
  for (std::size_t t = 0; t < 11; ++t) {
    CHECK(report.r2_mean.at(t, 0) == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK(report.flow_kind == "conditional");
}

TEST_CASE("probe R2 stays near zero for fresh-noise targets and never exceeds 1") {
  Rng rng(4);
  Tensor state = random_tensor(Shape{256, 4}, rng);
  Trajectory traj = constant_trajectory(state);
  std::vector<double> noise(256);
  for (auto& v : noise) v = rng.normal();

  Rng probe_rng(5);
  ProbeReport report =
      linear_probe_r2(traj, {{"noise", noise}}, probe_grid(), 128, 8, 1e-6, "unconditional",
                      probe_rng);
  for (std::size_t t = 0; t < 11; ++t) {
    CHECK(report.r2_mean.at(t, 0) <= 0.05);
    CHECK(report.r2_mean.at(t, 0) <= 1.0);
    CHECK(report.r2_std.at(t, 0) >= 0.0);
  }
}

TEST_CASE("train R2 dominates test R2 in expectation") {
  Rng rng(6);
  double train_acc = 0.0, test_acc = 0.0;
  const int repeats = 20;
  for (int rep = 0; rep < repeats; ++rep) {
    Tensor X = random_tensor(Shape{80, 5}, rng);
    std::vector<double> y(80);
    for (std::size_t i = 0; i < 80; ++i) {
      y[i] = X.at(i, 0) - 0.5 * X.at(i, 3) + 0.8 * rng.normal();
    }
    Tensor x_train(Shape{40, 5}), x_test(Shape{40, 5});
    std::vector<double> y_train(40), y_test(40);
    for (std::size_t i = 0; i < 40; ++i) {
      for (std::size_t j = 0; j < 5; ++j) {
        x_train.at(i, j) = X.at(i, j);
        x_test.at(i, j) = X.at(40 + i, j);
      }
      y_train[i] = y[i];
      y_test[i] = y[40 + i];
    }
    RidgeFit fit = ridge_fit(x_train, y_train, 1e-6);
    train_acc += r2_score(y_train, fit.predict(x_train));
    test_acc += r2_score(y_test, fit.predict(x_test));
  }
  CHECK(train_acc / repeats >= test_acc / repeats);
}

TEST_CASE("class structure score separates well-separated clusters") {
  Rng rng(7);
  const std::size_t per = 100;
  Tensor X(Shape{4 * per, 2});
  std::vector<int> y(4 * per);
  const double centers[4][2] = {{5, 5}, {-5, 5}, {5, -5}, {-5, -5}};
  for (std::size_t i = 0; i < 4 * per; ++i) {
    const int c = static_cast<int>(i / per);
    X.at(i, 0) = centers[c][0] + 0.3 * rng.normal();
    X.at(i, 1) = centers[c][1] + 0.3 * rng.normal();
    y[i] = c;
  }
  Rng score_rng(8);
  CHECK(class_structure_score(X, y, score_rng) >= 0.99);

  SUBCASE("shuffled labels fall to chance") {
    std::vector<int> shuffled = y;
    Rng shuffle_rng(9);
    shuffle_rng.shuffle(shuffled);
    Rng score_rng2(10);
    const double acc = class_structure_score(X, shuffled, score_rng2);
    CHECK(std::abs(acc - 0.25) <= 0.05);
  }

  SUBCASE("score is stable under an invertible affine map") {
    Rng score_rng3(11);
    const double base = class_structure_score(X, y, score_rng3);
    // Rotate by 37 degrees and scale the axes unevenly.
    const double th = 37.0 * 3.14159265358979 / 180.0;
    Tensor Xa(Shape{4 * per, 2});
    for (std::size_t i = 0; i < 4 * per; ++i) {
      const double a = X.at(i, 0), b = X.at(i, 1);
      Xa.at(i, 0) = 1.7 * (std::cos(th) * a - std::sin(th) * b) + 3.0;
      Xa.at(i, 1) = 0.4 * (std::sin(th) * a + std::cos(th) * b) - 1.0;
    }
    Rng score_rng4(11);
    const double mapped = class_structure_score(Xa, y, score_rng4);
    CHECK(std::abs(mapped - base) <= 0.02);
  }
}

TEST_CASE("single-class input is rejected") {
  Tensor X = Tensor::zeros(Shape{10, 2});
  std::vector<int> y(10, 3);
  Rng rng(12);
  CHECK_THROWS_AS(class_structure_score(X, y, rng), std::invalid_argument);
}

TEST_CASE("pca on whitened 2-D data is a rotation") {
  Rng rng(13);
  const std::size_t n = 400;
  // Correlated cloud, whitened by the test's own covariance computation.
  Tensor raw(Shape{n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.normal(), v = rng.normal();
    raw.at(i, 0) = 2.0 * u;
    raw.at(i, 1) = 0.8 * u + 0.5 * v;
  }
  double m0 = 0, m1 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    m0 += raw.at(i, 0);
    m1 += raw.at(i, 1);
  }
  m0 /= n;
  m1 /= n;
  double c00 = 0, c01 = 0, c11 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = raw.at(i, 0) - m0, b = raw.at(i, 1) - m1;
    c00 += a * a;
    c01 += a * b;
    c11 += b * b;
  }
  c00 /= n - 1;
  c01 /= n - 1;
  c11 /= n - 1;
  // Inverse square root of the 2x2 covariance.
  const double tr = c00 + c11, det = c00 * c11 - c01 * c01;
  const double s = std::sqrt(det), t = std::sqrt(tr + 2.0 * s);
  const double i00 = (c11 + s) / (s * t), i01 = -c01 / (s * t), i11 = (c00 + s) / (s * t);
  Tensor white(Shape{n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    const double a = raw.at(i, 0) - m0, b = raw.at(i, 1) - m1;
    white.at(i, 0) = i00 * a + i01 * b;
    white.at(i, 1) = i01 * a + i11 * b;
  }

  PcaResult pca = pca_project(white, 2);
  const double total = pca.explained_variance[0] + pca.explained_variance[1];
  CHECK(total == doctest::Approx(2.0).epsilon(0.05));
  CHECK(pca.explained_variance_ratio[0] + pca.explained_variance_ratio[1] ==
        doctest::Approx(1.0).epsilon(1e-12));
  // A rotation preserves norms about the mean.
  for (std::size_t i = 0; i < 20; ++i) {
    const double before = std::hypot(white.at(i, 0), white.at(i, 1));
    const double after = std::hypot(pca.coords.at(i, 0), pca.coords.at(i, 1));
    CHECK(after == doctest::Approx(before).epsilon(1e-6));
  }
}

TEST_CASE("rank-1 data puts all variance on the first component") {
  Rng rng(14);
  Tensor X(Shape{50, 3});
  for (std::size_t i = 0; i < 50; ++i) {
    const double a = rng.normal();
    X.at(i, 0) = 2.0 * a;
    X.at(i, 1) = -a;
    X.at(i, 2) = 0.5 * a;
  }
  PcaResult pca = pca_project(X, 1);
  CHECK(pca.explained_variance_ratio[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS_AS(pca_project(X, 2), std::invalid_argument);  // k beyond rank
}

TEST_CASE("explained variance ratios sum to at most 1") {
  Rng rng(15);
  Tensor X = random_tensor(Shape{60, 5}, rng);
  PcaResult pca = pca_project(X, 3);
  double acc = 0.0;
  for (double v : pca.explained_variance_ratio) acc += v;
  CHECK(acc <= 1.0 + 1e-12);
}

TEST_CASE("style transfer with a zero flow is the reconstruction") {
  Rng rng(16);
  VaeConfig vcfg;
  vcfg.input_dim = 6;
  vcfg.latent_dim = 3;
  vcfg.hidden = 16;
  VaeModel vae(vcfg, rng);
  FlowConfig fcfg;
  fcfg.latent_dim = 3;
  fcfg.hidden = 8;
  fcfg.n_classes = 4;
  FlowModel flow(fcfg, rng);  // zero field

  Tensor x = random_tensor(Shape{6}, rng);
  Tensor out = style_transfer(vae, flow, x, Conditioning::of_class(1), Conditioning::of_class(2),
                              IntegratorConfig{});
  Tensor recon = vae.decode(vae.encode(x).mu);
  CHECK(out == recon);

  CHECK_THROWS_AS(style_transfer(vae, flow, x, Conditioning::null_token(),
                                 Conditioning::of_class(2), IntegratorConfig{}),
                  std::invalid_argument);
}

TEST_CASE("feature isolation residual arithmetic holds exactly") {
  Rng rng(17);
  VaeConfig vcfg;
  vcfg.input_dim = 6;
  vcfg.latent_dim = 3;
  vcfg.hidden = 16;
  VaeModel vae(vcfg, rng);
  FlowConfig fcfg;
  fcfg.latent_dim = 3;
  fcfg.hidden = 8;
  fcfg.n_classes = 4;
  FlowModel flow(fcfg, rng);
  // Give the flow nonzero weights so the regeneration differs.
  for (auto& np : flow.named_params()) {
    Rng w(fnv1a64(np.name) ^ 21);
    for (std::size_t i = 0; i < np.tensor->size(); ++i) (*np.tensor)[i] = 0.1 * w.normal();
  }

  Tensor x = random_tensor(Shape{6}, rng);
  ResidualReport report =
      feature_isolation_residual(vae, flow, x, Conditioning::of_class(0), IntegratorConfig{OdeMethod::rk4, 20});
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(report.residual[i] ==
          report.reconstruction[i] - report.conditional_regeneration[i]);
  }
  CHECK(report.norm_residual >= 0.0);

  // Self-conditioning with a zero flow leaves no residual at all.
  FlowModel zero_flow(fcfg, rng);
  ResidualReport self =
      feature_isolation_residual(vae, zero_flow, x, Conditioning::of_class(2), IntegratorConfig{});
  CHECK(self.norm_residual == 0.0);
}

TEST_SUITE_END();
