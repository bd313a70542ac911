#pragma once

#include <cstddef>
#include <vector>

#include "latentflow/adam.hpp"
#include "latentflow/nn.hpp"
#include "latentflow/rng.hpp"
#include "latentflow/tape.hpp"
#include "latentflow/tensor.hpp"

namespace latentflow {

struct VaeConfig {
  std::size_t input_dim = 32;
  std::size_t latent_dim = 8;
  std::size_t hidden = 128;
  std::size_t n_hidden_layers = 2;
  double beta = 1e-6;
  std::size_t epochs = 60;
  std::size_t batch_size = 128;
  AdamConfig adam{};
};

struct EncodeResult {
  Tensor mu;      // (n, latent) or (latent)
  Tensor logvar;  // same shape as mu
};

// MLP encoder/decoder pair. The encoder trunk feeds two linear heads for the
// posterior mean and log-variance; the decoder mirrors the trunk.
class VaeModel {
 public:
  VaeModel() = default;
  VaeModel(const VaeConfig& config, Rng& rng);

  std::size_t input_dim() const { return config_.input_dim; }
  std::size_t latent_dim() const { return config_.latent_dim; }
  double beta() const { return config_.beta; }
  const VaeConfig& config() const { return config_; }

  // Deterministic posterior parameters. Accepts (n, input) or (input).
  EncodeResult encode(const Tensor& x) const;
  // Deterministic reconstruction. Accepts (n, latent) or (latent).
  Tensor decode(const Tensor& z) const;

  std::vector<NamedParam> named_params();

  struct Bound {
    Mlp::Bound enc_trunk;
    Linear::Bound mu_head;
    Linear::Bound logvar_head;
    Mlp::Bound dec;
  };
  Bound bind(Tape& tape, bool requires_grad) const;

  // Forward pieces on an existing tape (used by the training loop and by
  // anything that needs gradients through the model).
  static std::pair<Var, Var> encode_on_tape(const Bound& bound, Var x);
  static Var decode_on_tape(const Bound& bound, Var z);

 private:
  VaeConfig config_;
  Mlp enc_trunk_;
  Linear mu_head_;
  Linear logvar_head_;
  Mlp dec_;

  friend struct VaeCheckpointAccess;
};

// z = mu + exp(0.5 logvar) * noise, elementwise.
Tensor reparameterize(const EncodeResult& enc, const Tensor& noise);

// Mean squared reconstruction error plus beta * KL(q || N(0, I)), averaged
// over the batch. KL per sample is 0.5 * sum(exp(logvar) + mu^2 - 1 - logvar).
double elbo_loss(const Tensor& x, const Tensor& x_hat, const EncodeResult& enc, double beta);

// KL term alone (batch mean), for reporting.
double kl_term(const EncodeResult& enc);

struct VaeTrainResult {
  VaeModel model;
  std::vector<double> epoch_losses;
};

// Trains on rows of X. Throws NumericError (see config.hpp) naming the epoch
// if the loss goes non-finite.
VaeTrainResult train_vae(const Tensor& X, const VaeConfig& config, Rng& rng);

}  // namespace latentflow
