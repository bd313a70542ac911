#include "latentflow/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "latentflow/adam.hpp"
#include "latentflow/linalg.hpp"

namespace latentflow {

// ---- ridge probes ----------------------------------------------------------

double RidgeFit::predict_row(const Tensor& X, std::size_t row) const {
  double acc = intercept;
  for (std::size_t j = 0; j < weights.size(); ++j) acc += weights[j] * X.at(row, j);
  return acc;
}

std::vector<double> RidgeFit::predict(const Tensor& X) const {
  std::vector<double> out(X.rows());
  for (std::size_t i = 0; i < X.rows(); ++i) out[i] = predict_row(X, i);
  return out;
}

RidgeFit ridge_fit(const Tensor& X, const std::vector<double>& y, double lambda) {
  if (X.rank() != 2 || X.rows() != y.size() || X.rows() == 0) {
    throw std::invalid_argument("ridge_fit: X " + shape_str(X.shape()) + " vs y of " +
                                std::to_string(y.size()));
  }
  if (lambda < 0.0) throw std::invalid_argument("ridge_fit: lambda must be >= 0");
  const std::size_t n = X.rows(), d = X.cols();

  // Center features and target; the intercept absorbs the means and stays
  // unregularized.
  std::vector<double> xm(d, 0.0);
  double ym = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ym += y[i];
    for (std::size_t j = 0; j < d; ++j) xm[j] += X.at(i, j);
  }
  ym /= static_cast<double>(n);
  for (double& v : xm) v /= static_cast<double>(n);

  Tensor gram(Shape{d, d});
  std::vector<double> rhs(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double xj = X.at(i, j) - xm[j];
      rhs[j] += xj * (y[i] - ym);
      for (std::size_t k = j; k < d; ++k) {
        gram.at(j, k) += xj * (X.at(i, k) - xm[k]);
      }
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    gram.at(j, j) += lambda;
    for (std::size_t k = 0; k < j; ++k) gram.at(j, k) = gram.at(k, j);
  }

  RidgeFit fit;
  if (!cholesky_solve(gram, rhs, fit.weights)) {
    throw std::invalid_argument(
        "ridge_fit: design matrix is singular with lambda = " + std::to_string(lambda) +
        "; use a nonzero ridge_lambda");
  }
  fit.intercept = ym;
  for (std::size_t j = 0; j < d; ++j) fit.intercept -= fit.weights[j] * xm[j];
  return fit;
}

double r2_score(const std::vector<double>& y, const std::vector<double>& y_hat) {
  if (y.size() != y_hat.size() || y.empty()) {
    throw std::invalid_argument("r2_score: size mismatch");
  }
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ss_res += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
    ss_tot += (y[i] - mean) * (y[i] - mean);
  }
  if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : 0.0;
  return 1.0 - ss_res / ss_tot;
}

double ProbeReport::mean_at(double time, const std::string& target) const {
  for (std::size_t ti = 0; ti < times.size(); ++ti) {
    if (std::abs(times[ti] - time) > 1e-9) continue;
    for (std::size_t j = 0; j < targets.size(); ++j) {
      if (targets[j] == target) return r2_mean.at(ti, j);
    }
  }
  throw std::invalid_argument("probe report: no entry for target '" + target + "' at t = " +
                              std::to_string(time));
}

ProbeReport linear_probe_r2(const Trajectory& traj,
                            const std::vector<std::pair<std::string, std::vector<double>>>& targets,
                            const std::vector<double>& probe_grid, std::size_t n_train,
                            std::size_t n_repeats, double ridge_lambda,
                            const std::string& flow_kind, Rng& rng) {
  if (traj.states.empty() || traj.states.front().rank() != 2) {
    throw std::invalid_argument("linear_probe_r2: need a batch trajectory");
  }
  const std::size_t n = traj.states.front().rows();
  if (n_train == 0 || n_train >= n) {
    throw std::invalid_argument("linear_probe_r2: n_train must be in (0, n); n = " +
                                std::to_string(n) + ", n_train = " + std::to_string(n_train));
  }
  if (n_repeats == 0) throw std::invalid_argument("linear_probe_r2: n_repeats must be > 0");
  for (const auto& [name, values] : targets) {
    if (values.size() != n) {
      throw std::invalid_argument("linear_probe_r2: target '" + name + "' has " +
                                  std::to_string(values.size()) + " values for " +
                                  std::to_string(n) + " samples");
    }
  }

  ProbeReport report;
  report.times = probe_grid;
  report.flow_kind = flow_kind;
  for (const auto& [name, values] : targets) report.targets.push_back(name);
  report.r2_mean = Tensor(Shape{probe_grid.size(), targets.size()});
  report.r2_std = Tensor(Shape{probe_grid.size(), targets.size()});

  // One split per repeat, shared across probe times and targets so the
  // curves are comparable.
  std::vector<std::vector<std::size_t>> splits(n_repeats);
  for (auto& s : splits) s = rng.permutation(n);

  const std::size_t n_test = n - n_train;
  for (std::size_t ti = 0; ti < probe_grid.size(); ++ti) {
    const Tensor& state = traj.state_at(probe_grid[ti]);
    for (std::size_t tj = 0; tj < targets.size(); ++tj) {
      const auto& values = targets[tj].second;
      std::vector<double> r2s(n_repeats);
      for (std::size_t rep = 0; rep < n_repeats; ++rep) {
        const auto& perm = splits[rep];
        Tensor x_train(Shape{n_train, state.cols()});
        std::vector<double> y_train(n_train);
        for (std::size_t i = 0; i < n_train; ++i) {
          for (std::size_t j = 0; j < state.cols(); ++j) {
            x_train.at(i, j) = state.at(perm[i], j);
          }
          y_train[i] = values[perm[i]];
        }
        const RidgeFit fit = ridge_fit(x_train, y_train, ridge_lambda);

        std::vector<double> y_test(n_test), y_hat(n_test);
        Tensor x_row(Shape{1, state.cols()});
        for (std::size_t i = 0; i < n_test; ++i) {
          const std::size_t src = perm[n_train + i];
          double acc = fit.intercept;
          for (std::size_t j = 0; j < state.cols(); ++j) acc += fit.weights[j] * state.at(src, j);
          y_hat[i] = acc;
          y_test[i] = values[src];
        }
        r2s[rep] = r2_score(y_test, y_hat);
      }
      double mean = 0.0;
      for (double v : r2s) mean += v;
      mean /= static_cast<double>(n_repeats);
      double var = 0.0;
      for (double v : r2s) var += (v - mean) * (v - mean);
      const double std_dev =
          n_repeats > 1 ? std::sqrt(var / static_cast<double>(n_repeats - 1)) : 0.0;
      report.r2_mean.at(ti, tj) = mean;
      report.r2_std.at(ti, tj) = std_dev;
    }
  }
  return report;
}

// ---- logistic probe --------------------------------------------------------

namespace {

Tensor standardized(const Tensor& X, const std::vector<double>& mean,
                    const std::vector<double>& std_dev) {
  Tensor out(X.shape());
  for (std::size_t i = 0; i < X.rows(); ++i) {
    for (std::size_t j = 0; j < X.cols(); ++j) {
      out.at(i, j) = (X.at(i, j) - mean[j]) / std_dev[j];
    }
  }
  return out;
}

}  // namespace

std::vector<int> LogisticModel::predict(const Tensor& X) const {
  const std::size_t n = X.rows(), d = X.cols();
  const std::size_t c = static_cast<std::size_t>(n_classes);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    int best = 0;
    double best_score = -1e300;
    for (std::size_t k = 0; k < c; ++k) {
      double score = w.at(d, k);  // bias row
      for (std::size_t j = 0; j < d; ++j) {
        score += w.at(j, k) * (X.at(i, j) - feature_mean[j]) / feature_std[j];
      }
      if (score > best_score) {
        best_score = score;
        best = static_cast<int>(k);
      }
    }
    out[i] = best;
  }
  return out;
}

double LogisticModel::accuracy(const Tensor& X, const std::vector<int>& y) const {
  const std::vector<int> pred = predict(X);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y.size(); ++i) hits += pred[i] == y[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(y.size());
}

LogisticModel fit_logistic(const Tensor& X, const std::vector<int>& y, int n_classes,
                           std::size_t iterations, double lr) {
  if (X.rank() != 2 || X.rows() != y.size() || X.rows() == 0) {
    throw std::invalid_argument("fit_logistic: X " + shape_str(X.shape()) + " vs y of " +
                                std::to_string(y.size()));
  }
  const std::size_t n = X.rows(), d = X.cols();
  const std::size_t c = static_cast<std::size_t>(n_classes);

  LogisticModel model;
  model.n_classes = n_classes;
  model.feature_mean.assign(d, 0.0);
  model.feature_std.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) model.feature_mean[j] += X.at(i, j);
  }
  for (double& v : model.feature_mean) v /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = X.at(i, j) - model.feature_mean[j];
      model.feature_std[j] += diff * diff;
    }
  }
  for (double& v : model.feature_std) {
    v = std::sqrt(v / static_cast<double>(n));
    if (v < 1e-12) v = 1.0;  // constant feature
  }

  const Tensor Z = standardized(X, model.feature_mean, model.feature_std);
  model.w = Tensor(Shape{d + 1, c});

  std::vector<Tensor*> params{&model.w};
  AdamState state = adam_init(params);
  AdamConfig adam_cfg;
  adam_cfg.lr = lr;

  Tensor probs(Shape{n, c});
  for (std::size_t it = 0; it < iterations; ++it) {
    // Softmax cross-entropy gradient: Z^T (p - onehot(y)) / n.
    for (std::size_t i = 0; i < n; ++i) {
      double max_score = -1e300;
      for (std::size_t k = 0; k < c; ++k) {
        double score = model.w.at(d, k);
        for (std::size_t j = 0; j < d; ++j) score += model.w.at(j, k) * Z.at(i, j);
        probs.at(i, k) = score;
        max_score = std::max(max_score, score);
      }
      double denom = 0.0;
      for (std::size_t k = 0; k < c; ++k) {
        probs.at(i, k) = std::exp(probs.at(i, k) - max_score);
        denom += probs.at(i, k);
      }
      for (std::size_t k = 0; k < c; ++k) probs.at(i, k) /= denom;
      probs.at(i, static_cast<std::size_t>(y[i])) -= 1.0;
    }
    Tensor grad(Shape{d + 1, c});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < c; ++k) {
        const double g = probs.at(i, k) / static_cast<double>(n);
        for (std::size_t j = 0; j < d; ++j) grad.at(j, k) += g * Z.at(i, j);
        grad.at(d, k) += g;
      }
    }
    adam_step(params, {grad}, state, adam_cfg);
  }
  return model;
}

double class_structure_score(const Tensor& latents, const std::vector<int>& labels, Rng& rng) {
  if (latents.rank() != 2 || latents.rows() != labels.size() || labels.empty()) {
    throw std::invalid_argument("class_structure_score: latents " + shape_str(latents.shape()) +
                                " vs " + std::to_string(labels.size()) + " labels");
  }
  const std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) {
    throw std::invalid_argument("class_structure_score: need at least two classes, got " +
                                std::to_string(distinct.size()));
  }
  const int n_classes = *distinct.rbegin() + 1;

  const std::size_t n = latents.rows();
  const std::size_t n_train = std::max<std::size_t>(1, (n * 7) / 10);
  auto perm = rng.permutation(n);

  Tensor x_train(Shape{n_train, latents.cols()});
  std::vector<int> y_train(n_train);
  for (std::size_t i = 0; i < n_train; ++i) {
    for (std::size_t j = 0; j < latents.cols(); ++j) x_train.at(i, j) = latents.at(perm[i], j);
    y_train[i] = labels[perm[i]];
  }
  const std::size_t n_test = n - n_train;
  if (n_test == 0) throw std::invalid_argument("class_structure_score: too few samples");
  Tensor x_test(Shape{n_test, latents.cols()});
  std::vector<int> y_test(n_test);
  for (std::size_t i = 0; i < n_test; ++i) {
    for (std::size_t j = 0; j < latents.cols(); ++j) {
      x_test.at(i, j) = latents.at(perm[n_train + i], j);
    }
    y_test[i] = labels[perm[n_train + i]];
  }

  const LogisticModel model = fit_logistic(x_train, y_train, n_classes);
  return model.accuracy(x_test, y_test);
}

// ---- latent surgery --------------------------------------------------------

Tensor style_transfer_batch(const VaeModel& vae, const FlowModel& flow, const Tensor& X,
                            const std::vector<Conditioning>& cond_src,
                            const std::vector<Conditioning>& cond_tgt,
                            const IntegratorConfig& config) {
  if (X.rank() != 2 || cond_src.size() != X.rows() || cond_tgt.size() != X.rows()) {
    throw std::invalid_argument("style_transfer: rows and conditions must align");
  }
  for (const auto& c : cond_src) {
    if (c.is_null()) {
      throw std::invalid_argument("style_transfer: source conditioning must not be null");
    }
  }
  const Tensor z1 = vae.encode(X).mu;
  const Tensor z0 = invert_to_base_batch(flow, z1, cond_src, config).end();
  const Tensor z1_new = generate_batch(flow, z0, cond_tgt, config).end();
  return vae.decode(z1_new);
}

Tensor style_transfer(const VaeModel& vae, const FlowModel& flow, const Tensor& x,
                      const Conditioning& cond_src, const Conditioning& cond_tgt,
                      const IntegratorConfig& config) {
  Tensor batch(Shape{1, x.size()}, x.vec());
  Tensor out = style_transfer_batch(vae, flow, batch, {cond_src}, {cond_tgt}, config);
  return Tensor(Shape{out.cols()}, out.vec());
}

ResidualReport feature_isolation_residual(const VaeModel& vae, const FlowModel& flow,
                                          const Tensor& x, const Conditioning& cond_reference,
                                          const IntegratorConfig& config) {
  const Tensor z1 = vae.encode(x).mu;
  const Tensor z0 = invert_to_base(flow, z1, Conditioning::null_token(), config);
  const Tensor z1_ref = generate(flow, z0, cond_reference, config);

  ResidualReport report;
  report.reconstruction = vae.decode(z1);
  report.conditional_regeneration = vae.decode(z1_ref);
  report.residual = Tensor(report.reconstruction.shape());
  for (std::size_t i = 0; i < report.residual.size(); ++i) {
    report.residual[i] = report.reconstruction[i] - report.conditional_regeneration[i];
  }
  auto norm = [](const Tensor& t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) acc += t[i] * t[i];
    return std::sqrt(acc);
  };
  report.norm_reconstruction = norm(report.reconstruction);
  report.norm_regeneration = norm(report.conditional_regeneration);
  report.norm_residual = norm(report.residual);
  return report;
}

// ---- PCA -------------------------------------------------------------------

PcaResult pca_project(const Tensor& latents, std::size_t k) {
  if (latents.rank() != 2) throw std::invalid_argument("pca_project: need (n, d) data");
  const std::size_t n = latents.rows(), d = latents.cols();
  if (k == 0 || k > d) {
    throw std::invalid_argument("pca_project: k = " + std::to_string(k) + " with dim " +
                                std::to_string(d));
  }
  if (n < k + 1) {
    throw std::invalid_argument("pca_project: need at least k + 1 samples, got " +
                                std::to_string(n));
  }

  PcaResult result;
  result.mean.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) result.mean[j] += latents.at(i, j);
  }
  for (double& v : result.mean) v /= static_cast<double>(n);

  Tensor cov(Shape{d, d});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < d; ++p) {
      const double xp = latents.at(i, p) - result.mean[p];
      for (std::size_t q = p; q < d; ++q) {
        cov.at(p, q) += xp * (latents.at(i, q) - result.mean[q]);
      }
    }
  }
  for (std::size_t p = 0; p < d; ++p) {
    for (std::size_t q = 0; q < p; ++q) cov.at(p, q) = cov.at(q, p);
    for (std::size_t q = p; q < d; ++q) {
      cov.at(p, q) /= static_cast<double>(n - 1);
      if (p != q) cov.at(q, p) = cov.at(p, q);
    }
  }

  const EighResult eig = jacobi_eigh(cov);
  double total = 0.0;
  for (double v : eig.eigenvalues) total += std::max(v, 0.0);

  const double rank_tol = 1e-12 * std::max(1.0, eig.eigenvalues.front());
  std::size_t rank = 0;
  for (double v : eig.eigenvalues) rank += v > rank_tol ? 1 : 0;
  if (k > rank) {
    throw std::invalid_argument("pca_project: k = " + std::to_string(k) +
                                " exceeds data rank " + std::to_string(rank));
  }

  result.components = Tensor(Shape{d, k});
  result.explained_variance.resize(k);
  result.explained_variance_ratio.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    result.explained_variance[j] = eig.eigenvalues[j];
    result.explained_variance_ratio[j] = total > 0.0 ? eig.eigenvalues[j] / total : 0.0;
    for (std::size_t i = 0; i < d; ++i) result.components.at(i, j) = eig.eigenvectors.at(i, j);
  }

  result.coords = Tensor(Shape{n, k});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < d; ++p) {
        acc += (latents.at(i, p) - result.mean[p]) * result.components.at(p, j);
      }
      result.coords.at(i, j) = acc;
    }
  }
  return result;
}

}  // namespace latentflow
