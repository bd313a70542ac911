#include "latentflow/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "json.hpp"
#include "latentflow/io.hpp"

namespace latentflow {

namespace {

using nlohmann::ordered_json;

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

double window_mean(const std::vector<double>& v, std::size_t start, std::size_t len) {
  double acc = 0.0;
  for (std::size_t i = start; i < start + len; ++i) acc += v[i];
  return acc / static_cast<double>(len);
}

}  // namespace

Pipeline::Pipeline(ExperimentConfig config) : cfg_(std::move(config)) {
  cfg_.validate();
  if (cfg_.out_dir.empty()) throw ConfigError("config error at out_dir: must not be empty");
  std::filesystem::create_directories(cfg_.out_dir);
  header_echo_ = cfg_.to_json_text();
}

std::string Pipeline::out_path(const std::string& name) const {
  return (std::filesystem::path(cfg_.out_dir) / name).string();
}

std::vector<std::string> Pipeline::csv_comments() const {
  return {"experiment=" + cfg_.experiment + " seed=" + std::to_string(cfg_.seed) +
              (cfg_.smoke ? " smoke=true" : " smoke=false"),
          "config=" + header_echo_};
}

void Pipeline::prepare_data() {
  if (data_ready_) return;
  Rng data_rng = Rng::child(cfg_.seed, "dataset");
  std::size_t n = 0;
  if (is_factors()) {
    factor_data_ = sample_factor_dataset(cfg_.factor, data_rng);
    n = factor_data_.samples.size();
  } else {
    gauss_samples_ = sample_gaussian_mixture(cfg_.gaussian, data_rng);
    n = gauss_samples_.size();
  }

  Rng split_rng = Rng::child(cfg_.seed, "split");
  auto perm = split_rng.permutation(n);
  const auto n_train =
      static_cast<std::size_t>(static_cast<double>(n) * cfg_.train_fraction);
  train_idx_.assign(perm.begin(), perm.begin() + n_train);
  test_idx_.assign(perm.begin() + n_train, perm.end());

  const auto comments = csv_comments();
  if (is_factors()) {
    std::vector<FactorSample> train, test;
    for (auto i : train_idx_) train.push_back(factor_data_.samples[i]);
    for (auto i : test_idx_) test.push_back(factor_data_.samples[i]);
    write_factor_csv(out_path("dataset_train.csv"), train, comments);
    write_factor_csv(out_path("dataset_test.csv"), test, comments);
  } else {
    std::vector<GaussianSample> train, test;
    for (auto i : train_idx_) train.push_back(gauss_samples_[i]);
    for (auto i : test_idx_) test.push_back(gauss_samples_[i]);
    write_gaussian_csv(out_path("dataset_train.csv"), train, comments);
    write_gaussian_csv(out_path("dataset_test.csv"), test, comments);
  }
  data_ready_ = true;
}

Tensor Pipeline::observations(const std::vector<std::size_t>& idx) const {
  if (is_factors()) {
    const std::size_t dim = cfg_.factor.observation_dim;
    Tensor x(Shape{idx.size(), dim});
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t j = 0; j < dim; ++j) x.at(i, j) = factor_data_.samples[idx[i]].x[j];
    }
    return x;
  }
  Tensor x(Shape{idx.size(), 2});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    x.at(i, 0) = gauss_samples_[idx[i]].x[0];
    x.at(i, 1) = gauss_samples_[idx[i]].x[1];
  }
  return x;
}

Tensor Pipeline::latents(const std::vector<std::size_t>& idx) {
  const Tensor obs = observations(idx);
  return is_factors() ? vae().encode(obs).mu : obs;
}

Conditioning Pipeline::conditioning_for(std::size_t sample_idx) const {
  if (is_factors()) {
    const auto& s = factor_data_.samples[sample_idx];
    return Conditioning::with_continuous(s.label, {s.r, s.g});  // b stays withheld
  }
  return Conditioning::of_class(gauss_samples_[sample_idx].label);
}

const VaeModel& Pipeline::vae() {
  if (!vae_) {
    const std::string path = out_path("vae.ckpt");
    if (!std::filesystem::exists(path)) {
      throw std::runtime_error("pipeline: missing " + path + "; run the train-vae stage first");
    }
    vae_ = load_vae_checkpoint(path);
  }
  return *vae_;
}

const FlowModel& Pipeline::flow() {
  if (!flow_) {
    const std::string path = out_path("flow.ckpt");
    if (!std::filesystem::exists(path)) {
      throw std::runtime_error("pipeline: missing " + path + "; run the train-flow stage first");
    }
    flow_ = load_flow_checkpoint(path);
  }
  return *flow_;
}

void Pipeline::train_vae_stage() {
  if (!is_factors()) return;  // the 2-D experiment trains the flow on raw data
  prepare_data();
  const Tensor x_train = observations(train_idx_);

  Rng rng = Rng::child(cfg_.seed, "train-vae");
  VaeTrainResult trained = train_vae(x_train, cfg_.vae, rng);
  vae_ = std::move(trained.model);
  save_vae_checkpoint(out_path("vae.ckpt"), *vae_, header_echo_, cfg_.seed);

  {
    CsvWriter csv(out_path("vae_loss.csv"), csv_comments(), {"epoch", "loss"});
    for (std::size_t e = 0; e < trained.epoch_losses.size(); ++e) {
      csv.cell(e).cell(trained.epoch_losses[e]);
      csv.end_row();
    }
  }

  // Held-out reconstruction quality, relative to the test-set variance.
  const Tensor x_test = observations(test_idx_);
  const EncodeResult enc = vae_->encode(x_test);
  const Tensor recon = vae_->decode(enc.mu);
  double mse = 0.0;
  for (std::size_t i = 0; i < x_test.size(); ++i) {
    mse += (x_test[i] - recon[i]) * (x_test[i] - recon[i]);
  }
  mse /= static_cast<double>(x_test.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < x_test.size(); ++i) mean += x_test[i];
  mean /= static_cast<double>(x_test.size());
  double variance = 0.0;
  for (std::size_t i = 0; i < x_test.size(); ++i) {
    variance += (x_test[i] - mean) * (x_test[i] - mean);
  }
  variance /= static_cast<double>(x_test.size());

  ordered_json m;
  m["epochs"] = trained.epoch_losses.size();
  m["first_epoch_loss"] = trained.epoch_losses.front();
  m["final_epoch_loss"] = trained.epoch_losses.back();
  m["test_recon_mse"] = mse;
  m["test_variance"] = variance;
  m["test_recon_mse_over_variance"] = mse / variance;
  write_metrics("vae", m.dump(2));
}

void Pipeline::train_flow_stage() {
  prepare_data();

  Tensor mus;
  std::optional<Tensor> logvars;
  std::vector<Conditioning> conds;
  conds.reserve(train_idx_.size());
  for (auto i : train_idx_) conds.push_back(conditioning_for(i));

  if (is_factors()) {
    const EncodeResult enc = vae().encode(observations(train_idx_));
    mus = enc.mu;
    logvars = enc.logvar;
  } else {
    mus = observations(train_idx_);
  }

  Rng rng = Rng::child(cfg_.seed, "train-flow");
  FlowTrainResult trained = train_flow(mus, logvars ? &*logvars : nullptr, conds, cfg_.flow,
                                       cfg_.flow_train, rng);
  flow_ = std::move(trained.model);
  save_flow_checkpoint(out_path("flow.ckpt"), *flow_, header_echo_, cfg_.seed);

  {
    CsvWriter csv(out_path("flow_loss.csv"), csv_comments(), {"step", "loss"});
    for (std::size_t s = 0; s < trained.step_losses.size(); ++s) {
      csv.cell(s).cell(trained.step_losses[s]);
      csv.end_row();
    }
  }

  const std::size_t window = std::max<std::size_t>(1, trained.step_losses.size() / 20);
  const double initial = window_mean(trained.step_losses, 0, window);
  const double final_loss =
      window_mean(trained.step_losses, trained.step_losses.size() - window, window);
  ordered_json m;
  m["steps"] = trained.step_losses.size();
  m["initial_loss_smoothed"] = initial;
  m["final_loss_smoothed"] = final_loss;
  m["loss_ratio"] = final_loss / initial;
  write_metrics("flow", m.dump(2));
}

const Pipeline::ProbeSet& Pipeline::probe_set() {
  if (probe_set_) return *probe_set_;
  prepare_data();
  const std::size_t n_probe = std::min(cfg_.analysis.n_probe_samples, test_idx_.size());
  std::vector<std::size_t> idx(test_idx_.begin(), test_idx_.begin() + n_probe);

  ProbeSet set;
  set.latents = latents(idx);
  for (auto i : idx) {
    set.conds.push_back(conditioning_for(i));
    if (is_factors()) {
      const auto& s = factor_data_.samples[i];
      set.labels.push_back(s.label);
      set.r.push_back(s.r);
      set.g.push_back(s.g);
      set.b.push_back(s.b);
    } else {
      const auto& s = gauss_samples_[i];
      set.labels.push_back(s.label);
      set.d.push_back(s.d);
    }
  }
  probe_set_ = std::move(set);
  return *probe_set_;
}

const Trajectory& Pipeline::conditional_trajectory() {
  if (!traj_cond_) {
    const ProbeSet& set = probe_set();
    traj_cond_ = invert_to_base_batch(flow(), set.latents, set.conds, cfg_.integrator);
  }
  return *traj_cond_;
}

const Trajectory& Pipeline::unconditional_trajectory() {
  if (!traj_uncond_) {
    const ProbeSet& set = probe_set();
    const std::vector<Conditioning> nulls(set.latents.rows(), Conditioning::null_token());
    traj_uncond_ = invert_to_base_batch(flow(), set.latents, nulls, cfg_.integrator);
  }
  return *traj_uncond_;
}

void Pipeline::write_trajectory_csv(const std::string& path, const Trajectory& traj) {
  const std::size_t dim = traj.states.front().cols();
  std::vector<std::string> header{"sample_id", "t"};
  for (std::size_t j = 0; j < dim; ++j) header.push_back("dim_" + std::to_string(j));
  CsvWriter csv(path, csv_comments(), header);
  for (double t : cfg_.probe_grid()) {
    const Tensor& state = traj.state_at(t);
    for (std::size_t i = 0; i < state.rows(); ++i) {
      csv.cell(i).cell(t);
      for (std::size_t j = 0; j < dim; ++j) csv.cell(state.at(i, j));
      csv.end_row();
    }
  }
}

void Pipeline::invert_stage() {
  prepare_data();
  const Trajectory& cond = conditional_trajectory();
  const Trajectory& uncond = unconditional_trajectory();
  write_trajectory_csv(out_path("trajectories_conditional.csv"), cond);
  write_trajectory_csv(out_path("trajectories_unconditional.csv"), uncond);

  ordered_json m;

  // Round-trip study on held-out latents: invert conditionally, regenerate,
  // and compare. One entry per configured step count.
  {
    const std::size_t n_rt = std::min(cfg_.analysis.n_roundtrip, test_idx_.size());
    std::vector<std::size_t> idx(test_idx_.begin(), test_idx_.begin() + n_rt);
    const Tensor z1 = latents(idx);
    std::vector<Conditioning> conds;
    for (auto i : idx) conds.push_back(conditioning_for(i));

    ordered_json rt;
    rt["n_samples"] = n_rt;
    rt["steps"] = cfg_.analysis.roundtrip_steps;
    std::vector<double> medians;
    for (std::size_t n_steps : cfg_.analysis.roundtrip_steps) {
      IntegratorConfig icfg{cfg_.integrator.method, n_steps};
      const Tensor z0 = invert_to_base_batch(flow(), z1, conds, icfg).end();
      const Tensor back = generate_batch(flow(), z0, conds, icfg).end();
      std::vector<double> errs(n_rt);
      for (std::size_t i = 0; i < n_rt; ++i) {
        double num = 0.0, den = 0.0;
        for (std::size_t j = 0; j < z1.cols(); ++j) {
          num += (back.at(i, j) - z1.at(i, j)) * (back.at(i, j) - z1.at(i, j));
          den += z1.at(i, j) * z1.at(i, j);
        }
        errs[i] = std::sqrt(num / std::max(den, 1e-300));
      }
      medians.push_back(median(errs));
    }
    rt["median_rel_error"] = medians;
    m["roundtrip"] = rt;
  }

  // Conditional generation quality, 2-D experiment only: per class, generate
  // from base noise and compare moments with the data parameters.
  if (!is_factors()) {
    Rng gen_rng = Rng::child(cfg_.seed, "generate");
    const std::size_t per_class = cfg_.analysis.n_generate_per_class;
    ordered_json gen;
    std::vector<double> mean_dists, cov_errs;
    for (int c = 0; c < 4; ++c) {
      Tensor eps(Shape{per_class, 2});
      gen_rng.fill_normal(eps);
      const std::vector<Conditioning> conds(per_class, Conditioning::of_class(c));
      const Tensor out = generate_batch(flow(), eps, conds, cfg_.integrator).end();
      double mx = 0, my = 0;
      for (std::size_t i = 0; i < per_class; ++i) {
        mx += out.at(i, 0);
        my += out.at(i, 1);
      }
      mx /= static_cast<double>(per_class);
      my /= static_cast<double>(per_class);
      double cxx = 0, cyy = 0, cxy = 0;
      for (std::size_t i = 0; i < per_class; ++i) {
        cxx += (out.at(i, 0) - mx) * (out.at(i, 0) - mx);
        cyy += (out.at(i, 1) - my) * (out.at(i, 1) - my);
        cxy += (out.at(i, 0) - mx) * (out.at(i, 1) - my);
      }
      cxx /= static_cast<double>(per_class - 1);
      cyy /= static_cast<double>(per_class - 1);
      cxy /= static_cast<double>(per_class - 1);
      const auto& target = cfg_.gaussian.means[static_cast<std::size_t>(c)];
      mean_dists.push_back(std::hypot(mx - target[0], my - target[1]));
      const double scale = cfg_.gaussian.covariance_scale;
      cov_errs.push_back(std::max({std::abs(cxx - scale), std::abs(cyy - scale), std::abs(cxy)}) /
                         scale);
    }
    gen["n_per_class"] = per_class;
    gen["mean_distance"] = mean_dists;
    gen["cov_rel_error"] = cov_errs;
    gen["max_mean_distance"] = *std::max_element(mean_dists.begin(), mean_dists.end());
    gen["max_cov_rel_error"] = *std::max_element(cov_errs.begin(), cov_errs.end());
    m["generation"] = gen;
  }

  write_metrics("invert", m.dump(2));
}

void Pipeline::write_probe_csv(const std::string& path, const ProbeReport& report) {
  CsvWriter csv(path, csv_comments(), {"t", "target", "r2_mean", "r2_std", "flow_kind"});
  for (std::size_t ti = 0; ti < report.times.size(); ++ti) {
    for (std::size_t tj = 0; tj < report.targets.size(); ++tj) {
      csv.cell(report.times[ti])
          .cell(report.targets[tj])
          .cell(report.r2_mean.at(ti, tj))
          .cell(report.r2_std.at(ti, tj))
          .cell(report.flow_kind);
      csv.end_row();
    }
  }
}

void Pipeline::write_pca_csv(const std::string& path, const Tensor& latents,
                             const std::vector<int>& labels) {
  const PcaResult pca = pca_project(latents, std::min<std::size_t>(2, latents.cols()));
  std::vector<std::string> header{"sample_id"};
  for (std::size_t j = 0; j < pca.coords.cols(); ++j) {
    header.push_back("pc" + std::to_string(j + 1));
  }
  header.push_back("label");
  CsvWriter csv(path, csv_comments(), header);
  for (std::size_t i = 0; i < pca.coords.rows(); ++i) {
    csv.cell(i);
    for (std::size_t j = 0; j < pca.coords.cols(); ++j) csv.cell(pca.coords.at(i, j));
    csv.cell(labels[i]);
    csv.end_row();
  }
}

void Pipeline::probe_stage() {
  const ProbeSet& set = probe_set();
  const Trajectory& cond = conditional_trajectory();
  const Trajectory& uncond = unconditional_trajectory();
  const auto grid = cfg_.probe_grid();

  std::vector<std::pair<std::string, std::vector<double>>> targets;
  if (is_factors()) {
    targets = {{"r", set.r}, {"g", set.g}, {"b", set.b}};
  } else {
    // Position components relative to the class mean are diagnostics next to
    // the headline distance target.
    std::vector<double> pos0(set.d.size()), pos1(set.d.size());
    for (std::size_t i = 0; i < set.d.size(); ++i) {
      const auto& mean = cfg_.gaussian.means[static_cast<std::size_t>(set.labels[i])];
      pos0[i] = set.latents.at(i, 0) - mean[0];
      pos1[i] = set.latents.at(i, 1) - mean[1];
    }
    targets = {{"d", set.d}, {"pos0", pos0}, {"pos1", pos1}};
  }

  Rng probe_rng_cond = Rng::child(cfg_.seed, "probe/conditional");
  Rng probe_rng_uncond = Rng::child(cfg_.seed, "probe/unconditional");
  const ProbeReport rep_cond =
      linear_probe_r2(cond, targets, grid, cfg_.analysis.n_train, cfg_.analysis.n_repeats,
                      cfg_.analysis.ridge_lambda, "conditional", probe_rng_cond);
  const ProbeReport rep_uncond =
      linear_probe_r2(uncond, targets, grid, cfg_.analysis.n_train, cfg_.analysis.n_repeats,
                      cfg_.analysis.ridge_lambda, "unconditional", probe_rng_uncond);
  write_probe_csv(out_path("probe_conditional.csv"), rep_cond);
  write_probe_csv(out_path("probe_unconditional.csv"), rep_uncond);

  // Class structure at the three slices the figures compare.
  Rng cs_t1 = Rng::child(cfg_.seed, "probe/class_t1");
  Rng cs_c0 = Rng::child(cfg_.seed, "probe/class_t0_cond");
  Rng cs_u0 = Rng::child(cfg_.seed, "probe/class_t0_uncond");
  const double class_t1 = class_structure_score(set.latents, set.labels, cs_t1);
  const double class_t0_cond = class_structure_score(cond.state_at(0.0), set.labels, cs_c0);
  const double class_t0_uncond = class_structure_score(uncond.state_at(0.0), set.labels, cs_u0);

  write_pca_csv(out_path("pca_t1.csv"), set.latents, set.labels);
  write_pca_csv(out_path("pca_t0_conditional.csv"), cond.state_at(0.0), set.labels);
  write_pca_csv(out_path("pca_t0_unconditional.csv"), uncond.state_at(0.0), set.labels);

  ordered_json m;
  m["class_structure_t1"] = class_t1;
  m["class_structure_t0_conditional"] = class_t0_cond;
  m["class_structure_t0_unconditional"] = class_t0_uncond;

  auto report_json = [&](const ProbeReport& rep) {
    ordered_json r;
    r["times"] = rep.times;
    for (std::size_t tj = 0; tj < rep.targets.size(); ++tj) {
      std::vector<double> means(rep.times.size()), stds(rep.times.size());
      for (std::size_t ti = 0; ti < rep.times.size(); ++ti) {
        means[ti] = rep.r2_mean.at(ti, tj);
        stds[ti] = rep.r2_std.at(ti, tj);
      }
      r[rep.targets[tj]] = ordered_json{{"r2_mean", means}, {"r2_std", stds}};
    }
    return r;
  };
  m["probe_conditional"] = report_json(rep_cond);
  m["probe_unconditional"] = report_json(rep_uncond);

  if (!is_factors()) {
    // Diagnostic: how much of d is carried by the base-point radius alone.
    const Tensor& t0 = cond.state_at(0.0);
    Tensor radius(Shape{t0.rows(), 1});
    for (std::size_t i = 0; i < t0.rows(); ++i) {
      radius.at(i, 0) = std::hypot(t0.at(i, 0), t0.at(i, 1));
    }
    const RidgeFit fit = ridge_fit(radius, set.d, cfg_.analysis.ridge_lambda);
    m["d_vs_radius_r2_t0_conditional"] = r2_score(set.d, fit.predict(radius));
  }

  write_metrics("probe", m.dump(2));
}

void Pipeline::transfer_stage() {
  if (!is_factors()) return;
  prepare_data();
  const std::size_t n_transfer = std::min(cfg_.analysis.n_transfer, test_idx_.size());
  std::vector<std::size_t> idx(test_idx_.begin(), test_idx_.begin() + n_transfer);

  Rng rng = Rng::child(cfg_.seed, "transfer");
  const Tensor x = observations(idx);
  std::vector<Conditioning> src, tgt;
  std::vector<int> tgt_class(n_transfer);
  for (std::size_t i = 0; i < n_transfer; ++i) {
    const auto& s = factor_data_.samples[idx[i]];
    src.push_back(Conditioning::with_continuous(s.label, {s.r, s.g}));
    const int shift = 1 + static_cast<int>(rng.uniform_index(
                              static_cast<std::size_t>(cfg_.factor.n_classes - 1)));
    tgt_class[i] = (s.label + shift) % cfg_.factor.n_classes;
    tgt.push_back(Conditioning::with_continuous(tgt_class[i], {s.r, s.g}));
  }

  const Tensor transferred = style_transfer_batch(vae(), flow(), x, src, tgt, cfg_.integrator);
  const Tensor z_new = vae().encode(transferred).mu;

  // Identity transfers (target == source) should reproduce the plain
  // reconstruction up to ODE round-trip error.
  double identity_rel_err = 0.0;
  {
    const Tensor identity = style_transfer_batch(vae(), flow(), x, src, src, cfg_.integrator);
    const Tensor recon = vae().decode(vae().encode(x).mu);
    std::vector<double> errs(n_transfer);
    for (std::size_t i = 0; i < n_transfer; ++i) {
      double num = 0.0, den = 0.0;
      for (std::size_t j = 0; j < recon.cols(); ++j) {
        num += (identity.at(i, j) - recon.at(i, j)) * (identity.at(i, j) - recon.at(i, j));
        den += recon.at(i, j) * recon.at(i, j);
      }
      errs[i] = std::sqrt(num / std::max(den, 1e-300));
    }
    identity_rel_err = median(errs);
  }

  // Probes fitted on the training split's latents.
  const Tensor train_latents = latents(train_idx_);
  std::vector<int> train_labels;
  std::vector<double> train_b;
  for (auto i : train_idx_) {
    train_labels.push_back(factor_data_.samples[i].label);
    train_b.push_back(factor_data_.samples[i].b);
  }
  const LogisticModel class_probe =
      fit_logistic(train_latents, train_labels, cfg_.factor.n_classes);
  const RidgeFit b_probe = ridge_fit(train_latents, train_b, cfg_.analysis.ridge_lambda);

  const std::vector<int> predicted = class_probe.predict(z_new);
  const std::vector<double> b_rec = b_probe.predict(z_new);

  std::size_t hits = 0;
  double b_err = 0.0;
  CsvWriter csv(out_path("transfer.csv"), csv_comments(),
                {"sample_id", "src_class", "tgt_class", "predicted_class", "b_src",
                 "b_recovered", "b_abs_error"});
  for (std::size_t i = 0; i < n_transfer; ++i) {
    const auto& s = factor_data_.samples[idx[i]];
    hits += predicted[i] == tgt_class[i] ? 1 : 0;
    const double err = std::abs(b_rec[i] - s.b);
    b_err += err;
    csv.cell(i)
        .cell(s.label)
        .cell(tgt_class[i])
        .cell(predicted[i])
        .cell(s.b)
        .cell(b_rec[i])
        .cell(err);
    csv.end_row();
  }

  ordered_json m;
  m["n_transfer"] = n_transfer;
  m["target_class_accuracy"] = static_cast<double>(hits) / static_cast<double>(n_transfer);
  m["b_mae"] = b_err / static_cast<double>(n_transfer);
  m["identity_transfer_median_rel_error"] = identity_rel_err;
  write_metrics("transfer", m.dump(2));
}

void Pipeline::isolate_stage() {
  if (!is_factors()) return;
  prepare_data();
  const int ref_class = cfg_.analysis.isolate_reference_class;

  // Noise-free evaluation samples so the analytic residual direction
  // A (onehot(class) - onehot(ref)) is exact; same mixing matrices.
  FactorDatasetSpec eval_spec = cfg_.factor;
  eval_spec.noise_scale = 0.0;
  eval_spec.n_samples = std::max<std::size_t>(cfg_.analysis.n_isolate * 2, 32);
  Rng rng = Rng::child(cfg_.seed, "isolate");
  const FactorDataset eval_data = sample_factor_dataset(eval_spec, rng);

  std::vector<std::size_t> chosen;
  for (std::size_t i = 0; i < eval_data.samples.size() && chosen.size() < cfg_.analysis.n_isolate;
       ++i) {
    if (eval_data.samples[i].label != ref_class) chosen.push_back(i);
  }

  const std::size_t dim = cfg_.factor.observation_dim;
  std::vector<std::string> header{"sample_id", "class", "ref_class"};
  for (std::size_t j = 0; j < dim; ++j) header.push_back("res_" + std::to_string(j));
  header.insert(header.end(), {"norm_recon", "norm_regen", "norm_residual", "cosine_to_analytic"});
  CsvWriter csv(out_path("residuals.csv"), csv_comments(), header);

  std::vector<double> cosines;
  for (std::size_t k = 0; k < chosen.size(); ++k) {
    const auto& s = eval_data.samples[chosen[k]];
    Tensor x(Shape{dim}, s.x);
    const Conditioning ref = Conditioning::with_continuous(ref_class, {s.r, s.g});
    const ResidualReport rep = feature_isolation_residual(vae(), flow(), x, ref, cfg_.integrator);

    // Analytic direction from the known mixing matrix.
    double dot = 0.0, nr = 0.0, na = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double analytic = eval_data.mixing_class.at(j, static_cast<std::size_t>(s.label)) -
                              eval_data.mixing_class.at(j, static_cast<std::size_t>(ref_class));
      dot += rep.residual[j] * analytic;
      nr += rep.residual[j] * rep.residual[j];
      na += analytic * analytic;
    }
    const double cosine = dot / std::max(std::sqrt(nr * na), 1e-300);
    cosines.push_back(cosine);

    csv.cell(k).cell(s.label).cell(ref_class);
    for (std::size_t j = 0; j < dim; ++j) csv.cell(rep.residual[j]);
    csv.cell(rep.norm_reconstruction)
        .cell(rep.norm_regeneration)
        .cell(rep.norm_residual)
        .cell(cosine);
    csv.end_row();
  }

  ordered_json m;
  m["n_samples"] = cosines.size();
  m["reference_class"] = ref_class;
  m["median_cosine"] = median(cosines);
  m["mean_cosine"] = mean_of(cosines);
  write_metrics("isolate", m.dump(2));
}

void Pipeline::write_metrics(const std::string& stage, const std::string& json_text) {
  write_text_file(out_path("metrics_" + stage + ".json"), json_text + "\n");
}

void Pipeline::report_stage() {
  ordered_json summary;
  summary["experiment"] = cfg_.experiment;
  summary["seed"] = cfg_.seed;
  summary["smoke"] = cfg_.smoke;
  summary["config"] = ordered_json::parse(header_echo_);

  ordered_json metrics;
  std::vector<std::string> missing;
  const std::vector<std::string> stages =
      is_factors() ? std::vector<std::string>{"vae", "flow", "invert", "probe", "transfer",
                                              "isolate"}
                   : std::vector<std::string>{"flow", "invert", "probe"};
  for (const auto& stage : stages) {
    const std::string path = out_path("metrics_" + stage + ".json");
    if (std::filesystem::exists(path)) {
      metrics[stage] = ordered_json::parse(read_text_file(path));
    } else {
      missing.push_back(stage);
    }
  }
  summary["metrics"] = metrics;
  summary["missing_stages"] = missing;
  write_text_file(out_path("summary.json"), summary.dump(2) + "\n");
}

void Pipeline::run_all() {
  train_vae_stage();
  train_flow_stage();
  invert_stage();
  probe_stage();
  transfer_stage();
  isolate_stage();
  report_stage();
}

}  // namespace latentflow
