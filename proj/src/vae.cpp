#include "latentflow/vae.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "latentflow/errors.hpp"

namespace latentflow {

namespace {

Tensor as_batch(const Tensor& x, std::size_t dim, const char* what) {
  if (x.rank() == 1 && x.size() == dim) return Tensor(Shape{1, dim}, x.vec());
  if (x.rank() == 2 && x.cols() == dim) return x;
  throw std::invalid_argument(std::string(what) + ": expected (n, " + std::to_string(dim) +
                              ") or (" + std::to_string(dim) + "), got " + shape_str(x.shape()));
}

Tensor like_input(const Tensor& out, const Tensor& original) {
  if (original.rank() == 1) return Tensor(Shape{out.cols()}, out.vec());
  return out;
}

}  // namespace

VaeModel::VaeModel(const VaeConfig& config, Rng& rng) : config_(config) {
  std::vector<std::size_t> enc_dims{config.input_dim};
  for (std::size_t i = 0; i < config.n_hidden_layers; ++i) enc_dims.push_back(config.hidden);
  enc_trunk_ = Mlp(enc_dims, Activation::relu, rng);
  mu_head_ = Linear(config.hidden, config.latent_dim, rng);
  logvar_head_ = Linear(config.hidden, config.latent_dim, rng);

  std::vector<std::size_t> dec_dims{config.latent_dim};
  for (std::size_t i = 0; i < config.n_hidden_layers; ++i) dec_dims.push_back(config.hidden);
  dec_dims.push_back(config.input_dim);
  dec_ = Mlp(dec_dims, Activation::relu, rng);
}

VaeModel::Bound VaeModel::bind(Tape& tape, bool requires_grad) const {
  return Bound{enc_trunk_.bind(tape, requires_grad), mu_head_.bind(tape, requires_grad),
               logvar_head_.bind(tape, requires_grad), dec_.bind(tape, requires_grad)};
}

std::pair<Var, Var> VaeModel::encode_on_tape(const Bound& bound, Var x) {
  Var h = apply_activation(bound.enc_trunk(x), bound.enc_trunk.act);
  return {bound.mu_head(h), bound.logvar_head(h)};
}

Var VaeModel::decode_on_tape(const Bound& bound, Var z) { return bound.dec(z); }

EncodeResult VaeModel::encode(const Tensor& x) const {
  const Tensor batch = as_batch(x, config_.input_dim, "encode");
  Tape tape;
  Bound bound = bind(tape, false);
  auto [mu, logvar] = encode_on_tape(bound, tape.input(batch, false));
  return {like_input(tape.value(mu), x), like_input(tape.value(logvar), x)};
}

Tensor VaeModel::decode(const Tensor& z) const {
  const Tensor batch = as_batch(z, config_.latent_dim, "decode");
  Tape tape;
  Bound bound = bind(tape, false);
  Var out = decode_on_tape(bound, tape.input(batch, false));
  return like_input(tape.value(out), z);
}

std::vector<NamedParam> VaeModel::named_params() {
  std::vector<NamedParam> out;
  enc_trunk_.collect_params("enc", out);
  mu_head_.collect_params("mu", out);
  logvar_head_.collect_params("logvar", out);
  dec_.collect_params("dec", out);
  return out;
}

Tensor reparameterize(const EncodeResult& enc, const Tensor& noise) {
  if (noise.shape() != enc.mu.shape()) {
    throw std::invalid_argument("reparameterize: noise shape " + shape_str(noise.shape()) +
                                " vs mu " + shape_str(enc.mu.shape()));
  }
  Tensor z(enc.mu.shape());
  for (std::size_t i = 0; i < z.size(); ++i) {
    z[i] = enc.mu[i] + std::exp(0.5 * enc.logvar[i]) * noise[i];
  }
  return z;
}

double kl_term(const EncodeResult& enc) {
  const std::size_t n = enc.mu.rank() == 2 ? enc.mu.rows() : 1;
  double acc = 0.0;
  for (std::size_t i = 0; i < enc.mu.size(); ++i) {
    const double mu = enc.mu[i], lv = enc.logvar[i];
    acc += std::exp(lv) + mu * mu - 1.0 - lv;
  }
  return 0.5 * acc / static_cast<double>(n);
}

double elbo_loss(const Tensor& x, const Tensor& x_hat, const EncodeResult& enc, double beta) {
  if (x.shape() != x_hat.shape()) {
    throw std::invalid_argument("elbo_loss: x shape " + shape_str(x.shape()) + " vs x_hat " +
                                shape_str(x_hat.shape()));
  }
  double recon = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - x_hat[i];
    recon += d * d;
  }
  recon /= static_cast<double>(x.size());
  return recon + beta * kl_term(enc);
}

VaeTrainResult train_vae(const Tensor& X, const VaeConfig& config, Rng& rng) {
  if (X.rank() != 2 || X.rows() == 0) {
    throw std::invalid_argument("train_vae: need a non-empty (n, dim) matrix, got " +
                                shape_str(X.shape()));
  }
  if (X.cols() != config.input_dim) {
    throw std::invalid_argument("train_vae: data dim " + std::to_string(X.cols()) +
                                " vs configured input_dim " + std::to_string(config.input_dim));
  }

  VaeTrainResult result{VaeModel(config, rng), {}};
  VaeModel& model = result.model;

  auto named = model.named_params();
  std::vector<Tensor*> params;
  for (auto& np : named) params.push_back(np.tensor);
  AdamState adam = adam_init(params);

  const std::size_t n = X.rows();
  const std::size_t dim = X.cols();
  const std::size_t bs = std::min(config.batch_size, n);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  result.epoch_losses.reserve(config.epochs);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start + bs <= n; start += bs) {
      Tensor xb(Shape{bs, dim});
      for (std::size_t i = 0; i < bs; ++i) {
        for (std::size_t j = 0; j < dim; ++j) xb.at(i, j) = X.at(order[start + i], j);
      }
      Tensor noise(Shape{bs, config.latent_dim});
      rng.fill_normal(noise);

      Tape tape;
      VaeModel::Bound bound = model.bind(tape, true);
      Var xv = tape.input(xb, false);
      auto [mu, logvar] = VaeModel::encode_on_tape(bound, xv);
      // z = mu + exp(0.5 logvar) * noise
      Var z = tape.add(mu, tape.mul(tape.exp(tape.scale(logvar, 0.5)), tape.input(noise, false)));
      Var x_hat = VaeModel::decode_on_tape(bound, z);
      Var loss = tape.mse(x_hat, xv);
      if (config.beta != 0.0) {
        // 0.5 sum(exp(lv) + mu^2 - 1 - lv) / batch
        Var kl = tape.sub(tape.sub(tape.add(tape.exp(logvar), tape.mul(mu, mu)), logvar),
                          tape.input(Tensor::ones(tape.value(mu).shape()), false));
        loss = tape.add(loss, tape.scale(tape.sum(kl),
                                         config.beta * 0.5 / static_cast<double>(bs)));
      }
      tape.backward(loss);
      const double loss_value = tape.value(loss).item();
      if (!std::isfinite(loss_value)) {
        throw NumericError("train_vae: loss became non-finite at epoch " + std::to_string(epoch));
      }
      epoch_loss += loss_value;
      ++n_batches;

      std::vector<Tensor> grads;
      grads.reserve(params.size());
      auto collect = [&](auto&& layer_bound) {
        grads.push_back(tape.grad(layer_bound.w));
        grads.push_back(tape.grad(layer_bound.b));
      };
      for (const auto& l : bound.enc_trunk.layers) collect(l);
      collect(bound.mu_head);
      collect(bound.logvar_head);
      for (const auto& l : bound.dec.layers) collect(l);
      adam_step(params, grads, adam, config.adam);
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(n_batches));
  }
  return result;
}

}  // namespace latentflow
