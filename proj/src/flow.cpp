#include "latentflow/flow.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "latentflow/errors.hpp"

namespace latentflow {

std::string scheme_name(ConditioningScheme s) {
  return s == ConditioningScheme::raw_append ? "raw-append" : "film";
}

ConditioningScheme scheme_from_name(const std::string& name) {
  if (name == "raw-append") return ConditioningScheme::raw_append;
  if (name == "film") return ConditioningScheme::film;
  throw std::invalid_argument("unknown conditioning scheme: " + name);
}

std::string time_embedding_name(TimeEmbedding t) {
  return t == TimeEmbedding::raw ? "raw" : "sinusoidal";
}

TimeEmbedding time_embedding_from_name(const std::string& name) {
  if (name == "raw") return TimeEmbedding::raw;
  if (name == "sinusoidal") return TimeEmbedding::sinusoidal;
  throw std::invalid_argument("unknown time embedding: " + name);
}

Tensor condot_interpolate(const Tensor& z, const Tensor& eps, double t) {
  if (z.shape() != eps.shape()) {
    throw std::invalid_argument("condot_interpolate: shape mismatch " + shape_str(z.shape()) +
                                " vs " + shape_str(eps.shape()));
  }
  if (!(t >= 0.0 && t <= 1.0)) {
    throw std::invalid_argument("condot_interpolate: t = " + std::to_string(t) +
                                " outside [0, 1]");
  }
  Tensor out(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = t * z[i] + (1.0 - t) * eps[i];
  return out;
}

Tensor target_velocity(const Tensor& z, const Tensor& eps) {
  if (z.shape() != eps.shape()) {
    throw std::invalid_argument("target_velocity: shape mismatch " + shape_str(z.shape()) +
                                " vs " + shape_str(eps.shape()));
  }
  Tensor out(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - eps[i];
  return out;
}

FlowModel::FlowModel(const FlowConfig& config, Rng& rng) : config_(config) {
  if (config.n_classes < 1) throw std::invalid_argument("flow: n_classes must be >= 1");

  std::size_t in = config.latent_dim + time_feature_dim();
  if (config.scheme == ConditioningScheme::raw_append) {
    in += 1 + config.n_continuous;  // class value plus continuous factors
  }
  std::vector<std::size_t> dims{in};
  for (std::size_t i = 0; i < config.n_hidden_layers; ++i) dims.push_back(config.hidden);
  dims.push_back(config.latent_dim);
  trunk_ = Mlp(dims, config.act, rng);
  trunk_.layers.back().zero_init();

  if (config.scheme == ConditioningScheme::film) {
    class_embed_ = Tensor(Shape{static_cast<std::size_t>(config.n_classes) + 1, config.embed_dim});
    const double scale = 1.0 / std::sqrt(static_cast<double>(config.embed_dim));
    for (std::size_t i = 0; i < class_embed_.size(); ++i) class_embed_[i] = scale * rng.normal();
    // Zero-initialized so an untrained model is the unmodulated trunk.
    film_proj_ = Linear(config.embed_dim + config.n_continuous,
                        2 * config.n_hidden_layers * config.hidden, rng);
    film_proj_.zero_init();
  }
}

std::size_t FlowModel::time_feature_dim() const {
  return config_.time_embedding == TimeEmbedding::raw ? 1 : 5;
}

Tensor FlowModel::time_features(const std::vector<double>& times) const {
  const std::size_t n = times.size();
  Tensor out(Shape{n, time_feature_dim()});
  for (std::size_t i = 0; i < n; ++i) {
    const double t = times[i];
    if (config_.time_embedding == TimeEmbedding::raw) {
      out.at(i, 0) = t;
    } else {
      out.at(i, 0) = t;
      out.at(i, 1) = std::sin(2.0 * std::numbers::pi * t);
      out.at(i, 2) = std::cos(2.0 * std::numbers::pi * t);
      out.at(i, 3) = std::sin(4.0 * std::numbers::pi * t);
      out.at(i, 4) = std::cos(4.0 * std::numbers::pi * t);
    }
  }
  return out;
}

void FlowModel::validate_cond(const Conditioning& cond) const {
  if (cond.is_null()) {
    if (!cond.continuous.empty()) {
      throw std::invalid_argument("conditioning: null token carries continuous values");
    }
    return;
  }
  if (cond.class_id >= config_.n_classes) {
    throw std::invalid_argument("conditioning: unknown class id " +
                                std::to_string(cond.class_id) + " (n_classes = " +
                                std::to_string(config_.n_classes) + ")");
  }
  if (cond.continuous.size() != config_.n_continuous) {
    throw std::invalid_argument("conditioning: expected " + std::to_string(config_.n_continuous) +
                                " continuous values, got " +
                                std::to_string(cond.continuous.size()));
  }
}

FlowModel::Bound FlowModel::bind(Tape& tape, bool requires_grad) const {
  Bound bound;
  bound.trunk = trunk_.bind(tape, requires_grad);
  if (config_.scheme == ConditioningScheme::film) {
    bound.class_embed = tape.input(class_embed_, requires_grad);
    bound.film_proj = film_proj_.bind(tape, requires_grad);
  }
  return bound;
}

Var FlowModel::velocity_on_tape(Tape& tape, const Bound& bound, Var z_t,
                                const std::vector<double>& times,
                                const std::vector<Conditioning>& conds) const {
  const Tensor& z_val = tape.value(z_t);
  if (z_val.rank() != 2 || z_val.cols() != config_.latent_dim) {
    throw std::invalid_argument("velocity: expected (n, " + std::to_string(config_.latent_dim) +
                                ") latents, got " + shape_str(z_val.shape()));
  }
  const std::size_t n = z_val.rows();
  if (times.size() != n || conds.size() != n) {
    throw std::invalid_argument("velocity: rows, times, and conditions must align");
  }
  for (const auto& c : conds) validate_cond(c);

  Var h = tape.concat_cols(z_t, tape.input(time_features(times), false));

  if (config_.scheme == ConditioningScheme::raw_append) {
    Tensor feats(Shape{n, 1 + config_.n_continuous});
    for (std::size_t i = 0; i < n; ++i) {
      feats.at(i, 0) = static_cast<double>(conds[i].class_id);  // -1 encodes the null token
      for (std::size_t j = 0; j < config_.n_continuous; ++j) {
        feats.at(i, 1 + j) = conds[i].is_null() ? 0.0 : conds[i].continuous[j];
      }
    }
    h = tape.concat_cols(h, tape.input(feats, false));
    return bound.trunk(h);
  }

  // FiLM: embed the class (null gets the trailing learned row), append the
  // continuous factors, project once to per-layer scale and shift.
  const std::size_t rows = static_cast<std::size_t>(config_.n_classes) + 1;
  Tensor onehot(Shape{n, rows});
  Tensor cont(Shape{n, std::max<std::size_t>(config_.n_continuous, 1)});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t row =
        conds[i].is_null() ? rows - 1 : static_cast<std::size_t>(conds[i].class_id);
    onehot.at(i, row) = 1.0;
    for (std::size_t j = 0; j < config_.n_continuous; ++j) {
      cont.at(i, j) = conds[i].is_null() ? 0.0 : conds[i].continuous[j];
    }
  }
  Var y = tape.matmul(tape.input(onehot, false), bound.class_embed);
  if (config_.n_continuous > 0) {
    y = tape.concat_cols(y, tape.input(cont, false));
  }
  Var film = bound.film_proj(y);  // (n, 2 * n_hidden * hidden)

  const std::size_t width = config_.hidden;
  for (std::size_t l = 0; l < config_.n_hidden_layers; ++l) {
    h = bound.trunk.layers[l](h);
    Var scale = tape.slice_cols(film, 2 * l * width, width);
    Var shift = tape.slice_cols(film, 2 * l * width + width, width);
    h = tape.add(tape.mul(h, tape.add_scalar(scale, 1.0)), shift);
    h = apply_activation(h, config_.act);
  }
  return bound.trunk.layers.back()(h);
}

Tensor FlowModel::velocity_batch(const Tensor& Z, double t,
                                 const std::vector<Conditioning>& conds) const {
  return velocity_batch(Z, std::vector<double>(Z.rows(), t), conds);
}

Tensor FlowModel::velocity_batch(const Tensor& Z, const std::vector<double>& times,
                                 const std::vector<Conditioning>& conds) const {
  Tape tape;
  Bound bound = bind(tape, false);
  Var out = velocity_on_tape(tape, bound, tape.input(Z, false), times, conds);
  return tape.value(out);
}

Tensor FlowModel::velocity(const Tensor& z_t, double t, const Conditioning& cond) const {
  if (z_t.rank() != 1 || z_t.size() != config_.latent_dim) {
    throw std::invalid_argument("velocity: expected latent of dim " +
                                std::to_string(config_.latent_dim) + ", got " +
                                shape_str(z_t.shape()));
  }
  Tensor batch(Shape{1, config_.latent_dim}, z_t.vec());
  Tensor out = velocity_batch(batch, t, {cond});
  return Tensor(Shape{config_.latent_dim}, out.vec());
}

Tensor FlowModel::guided_velocity(const Tensor& z_t, double t, const Conditioning& cond,
                                  double w) const {
  if (cond.is_null()) {
    throw std::invalid_argument("guided_velocity: conditioning must not be the null token");
  }
  if (w == 1.0) return velocity(z_t, t, cond);
  if (w == 0.0) return velocity(z_t, t, Conditioning::null_token());
  Tensor u_cond = velocity(z_t, t, cond);
  Tensor u_null = velocity(z_t, t, Conditioning::null_token());
  Tensor out(u_cond.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = u_null[i] + w * (u_cond[i] - u_null[i]);
  }
  return out;
}

std::vector<NamedParam> FlowModel::named_params() {
  std::vector<NamedParam> out;
  trunk_.collect_params("trunk", out);
  if (config_.scheme == ConditioningScheme::film) {
    out.push_back({"class_embed", &class_embed_});
    film_proj_.collect_params("film_proj", out);
  }
  return out;
}

CfmDraw cfm_draw(const Tensor& zs, const std::vector<Conditioning>& conds, std::uint64_t base_key,
                 double dropout_p) {
  if (zs.rank() != 2 || zs.rows() == 0) {
    throw std::invalid_argument("cfm_loss: need a non-empty (n, latent) batch, got " +
                                shape_str(zs.shape()));
  }
  if (conds.size() != zs.rows()) {
    throw std::invalid_argument("cfm_loss: " + std::to_string(zs.rows()) + " latents vs " +
                                std::to_string(conds.size()) + " conditions");
  }
  const std::size_t n = zs.rows(), d = zs.cols();

  CfmDraw draw;
  draw.z_t = Tensor(Shape{n, d});
  draw.target = Tensor(Shape{n, d});
  draw.times.resize(n);
  draw.used.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    // Randomness is bound to the sample contents, not its batch position.
    const std::uint64_t key = fnv1a64(zs.data() + i * d, d * sizeof(double));
    Rng child(splitmix64(base_key ^ key));
    const double t = child.uniform();
    draw.times[i] = t;
    for (std::size_t j = 0; j < d; ++j) {
      const double eps = child.normal();
      const double z = zs.at(i, j);
      draw.z_t.at(i, j) = t * z + (1.0 - t) * eps;
      draw.target.at(i, j) = z - eps;
    }
    draw.used[i] = child.uniform() < dropout_p ? Conditioning::null_token() : conds[i];
  }
  return draw;
}

Var FlowModel::cfm_loss_on_tape(Tape& tape, const Bound& bound, const Tensor& zs,
                                const std::vector<Conditioning>& conds, std::uint64_t base_key,
                                double dropout_p) const {
  CfmDraw draw = cfm_draw(zs, conds, base_key, dropout_p);
  Var u = velocity_on_tape(tape, bound, tape.input(draw.z_t, false), draw.times, draw.used);
  // mse averages over n * d entries; scale by d for the mean squared norm.
  return tape.scale(tape.mse(u, tape.input(draw.target, false)),
                    static_cast<double>(zs.cols()));
}

double cfm_loss_with_field(const BatchVelocityFn& field, const Tensor& zs,
                           const std::vector<Conditioning>& conds, std::uint64_t base_key,
                           double dropout_p) {
  CfmDraw draw = cfm_draw(zs, conds, base_key, dropout_p);
  const Tensor u = field(draw.z_t, draw.times, draw.used);
  if (u.shape() != draw.target.shape()) {
    throw std::invalid_argument("cfm_loss: field output " + shape_str(u.shape()) +
                                " vs target " + shape_str(draw.target.shape()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double diff = u[i] - draw.target[i];
    acc += diff * diff;
  }
  return acc / static_cast<double>(zs.rows());
}

double cfm_loss(const FlowModel& model, const Tensor& zs, const std::vector<Conditioning>& conds,
                Rng& rng, double dropout_p) {
  Tape tape;
  FlowModel::Bound bound = model.bind(tape, false);
  Var loss = model.cfm_loss_on_tape(tape, bound, zs, conds, rng.next_u64(), dropout_p);
  return tape.value(loss).item();
}

FlowTrainResult train_flow(const Tensor& mus, const Tensor* logvars,
                           const std::vector<Conditioning>& conds, const FlowConfig& model_config,
                           const FlowTrainConfig& train_config, Rng& rng) {
  if (mus.rank() != 2 || mus.rows() == 0) {
    throw std::invalid_argument("train_flow: need a non-empty (n, latent) matrix, got " +
                                shape_str(mus.shape()));
  }
  if (mus.cols() != model_config.latent_dim) {
    throw std::invalid_argument("train_flow: latent dim " + std::to_string(mus.cols()) +
                                " vs configured " + std::to_string(model_config.latent_dim));
  }
  if (conds.size() != mus.rows()) {
    throw std::invalid_argument("train_flow: latents and conditions must align");
  }
  if (logvars != nullptr && logvars->shape() != mus.shape()) {
    throw std::invalid_argument("train_flow: logvars shape " + shape_str(logvars->shape()) +
                                " vs mus " + shape_str(mus.shape()));
  }

  FlowTrainResult result{FlowModel(model_config, rng), {}};
  FlowModel& model = result.model;

  auto named = model.named_params();
  std::vector<Tensor*> params;
  for (auto& np : named) params.push_back(np.tensor);
  AdamState adam = adam_init(params);

  const std::size_t n = mus.rows(), d = mus.cols();
  const std::size_t bs = std::min(train_config.batch_size, n);

  result.step_losses.reserve(train_config.steps);
  for (std::size_t step = 0; step < train_config.steps; ++step) {
    Tensor zb(Shape{bs, d});
    std::vector<Conditioning> cb(bs);
    for (std::size_t i = 0; i < bs; ++i) {
      const std::size_t idx = rng.uniform_index(n);
      cb[i] = conds[idx];
      for (std::size_t j = 0; j < d; ++j) {
        double z = mus.at(idx, j);
        if (logvars != nullptr) {
          z += std::exp(0.5 * logvars->at(idx, j)) * rng.normal();
        }
        zb.at(i, j) = z;
      }
    }

    Tape tape;
    FlowModel::Bound bound = model.bind(tape, true);
    Var loss =
        model.cfm_loss_on_tape(tape, bound, zb, cb, rng.next_u64(), train_config.dropout_p);
    tape.backward(loss);

    const double loss_value = tape.value(loss).item();
    if (!std::isfinite(loss_value)) {
      throw NumericError("train_flow: loss became non-finite at step " + std::to_string(step));
    }
    result.step_losses.push_back(loss_value);

    std::vector<Tensor> grads;
    grads.reserve(params.size());
    for (const auto& l : bound.trunk.layers) {
      grads.push_back(tape.grad(l.w));
      grads.push_back(tape.grad(l.b));
    }
    if (model_config.scheme == ConditioningScheme::film) {
      grads.push_back(tape.grad(bound.class_embed));
      grads.push_back(tape.grad(bound.film_proj.w));
      grads.push_back(tape.grad(bound.film_proj.b));
    }
    adam_step(params, grads, adam, train_config.adam);
  }
  return result;
}

}  // namespace latentflow
