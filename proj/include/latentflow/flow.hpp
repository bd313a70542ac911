#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "latentflow/adam.hpp"
#include "latentflow/nn.hpp"
#include "latentflow/rng.hpp"
#include "latentflow/tape.hpp"
#include "latentflow/tensor.hpp"

namespace latentflow {

// Label/continuous-factor bundle fed to the velocity field. The null token
// stands for "no conditioning"; under the raw-append scheme it is encoded as
// the value -1, under FiLM as a dedicated learned embedding row.
struct Conditioning {
  static constexpr int kNullClass = -1;

  int class_id = kNullClass;
  std::vector<double> continuous;

  static Conditioning null_token() { return Conditioning{}; }
  static Conditioning of_class(int id) { return Conditioning{id, {}}; }
  static Conditioning with_continuous(int id, std::vector<double> values) {
    return Conditioning{id, std::move(values)};
  }

  bool is_null() const { return class_id < 0; }

  friend bool operator==(const Conditioning& a, const Conditioning& b) {
    return a.class_id == b.class_id && a.continuous == b.continuous;
  }
};

enum class ConditioningScheme { raw_append, film };
enum class TimeEmbedding { raw, sinusoidal };

std::string scheme_name(ConditioningScheme s);
ConditioningScheme scheme_from_name(const std::string& name);
std::string time_embedding_name(TimeEmbedding t);
TimeEmbedding time_embedding_from_name(const std::string& name);

struct FlowConfig {
  std::size_t latent_dim = 2;
  ConditioningScheme scheme = ConditioningScheme::raw_append;
  std::size_t hidden = 64;
  // Number of hidden states; the trunk has n_hidden_layers + 1 linear layers.
  std::size_t n_hidden_layers = 3;
  Activation act = Activation::elu;
  int n_classes = 4;
  std::size_t n_continuous = 0;
  std::size_t embed_dim = 8;  // FiLM class embedding width
  TimeEmbedding time_embedding = TimeEmbedding::raw;
};

// z_t = t z + (1 - t) eps. Throws if t is outside [0, 1] or shapes differ.
Tensor condot_interpolate(const Tensor& z, const Tensor& eps, double t);

// Regression target of the CondOT path: z - eps, constant in t.
Tensor target_velocity(const Tensor& z, const Tensor& eps);

// Conditional velocity field u_t(z_t, y) with classifier-free conditioning.
// The trunk is an MLP on [z_t, time features]; conditioning enters either as
// extra raw input features or as FiLM scale/shift modulation of the hidden
// pre-activations. The final trunk layer is zero-initialized so a fresh
// model is the zero field.
class FlowModel {
 public:
  FlowModel() = default;
  FlowModel(const FlowConfig& config, Rng& rng);

  const FlowConfig& config() const { return config_; }
  std::size_t latent_dim() const { return config_.latent_dim; }

  Tensor velocity(const Tensor& z_t, double t, const Conditioning& cond) const;
  // Z: (n, latent); per-sample conditioning, shared time.
  Tensor velocity_batch(const Tensor& Z, double t, const std::vector<Conditioning>& conds) const;
  // Per-sample times.
  Tensor velocity_batch(const Tensor& Z, const std::vector<double>& times,
                        const std::vector<Conditioning>& conds) const;

  // u_null + w (u_cond - u_null); w = 1 and w = 0 return the conditional and
  // unconditional fields exactly. Requires cond != null.
  Tensor guided_velocity(const Tensor& z_t, double t, const Conditioning& cond, double w) const;

  std::vector<NamedParam> named_params();

  struct Bound {
    Mlp::Bound trunk;
    Var class_embed;          // FiLM only
    Linear::Bound film_proj;  // FiLM only
  };
  Bound bind(Tape& tape, bool requires_grad) const;

  // Forward on an existing tape. times holds one time value per row of z_t.
  Var velocity_on_tape(Tape& tape, const Bound& bound, Var z_t,
                       const std::vector<double>& times,
                       const std::vector<Conditioning>& conds) const;

  // Batch-mean of || u_t(t z + (1-t) eps, y) - (z - eps) ||^2 with per-sample
  // t ~ U[0,1], eps ~ N(0,I), and the label dropped to null with probability
  // dropout_p. Per-sample randomness is derived from base_key and the sample
  // contents, so the loss is invariant under batch permutation.
  Var cfm_loss_on_tape(Tape& tape, const Bound& bound, const Tensor& zs,
                       const std::vector<Conditioning>& conds, std::uint64_t base_key,
                       double dropout_p) const;

  Tensor time_features(const std::vector<double>& times) const;

 private:
  FlowConfig config_;
  Mlp trunk_;
  Tensor class_embed_;  // (n_classes + 1, embed_dim); last row is the null token
  Linear film_proj_;

  std::size_t time_feature_dim() const;
  void validate_cond(const Conditioning& cond) const;

  friend struct FlowCheckpointAccess;
};

// Per-sample draws of the CFM objective: t ~ U[0,1], eps ~ N(0,I),
// z_t = t z + (1-t) eps, target = z - eps, and the dropout decision. Each
// sample's stream is keyed by (base_key, sample bytes), which makes every
// quantity independent of batch order.
struct CfmDraw {
  Tensor z_t;     // (n, d)
  Tensor target;  // (n, d)
  std::vector<double> times;
  std::vector<Conditioning> used;  // null where the label was dropped
};

CfmDraw cfm_draw(const Tensor& zs, const std::vector<Conditioning>& conds, std::uint64_t base_key,
                 double dropout_p);

using BatchVelocityFn = std::function<Tensor(
    const Tensor& z_t, const std::vector<double>& times, const std::vector<Conditioning>& conds)>;

// CFM loss under an arbitrary velocity field; the model-based paths must
// agree with this value for the same base_key.
double cfm_loss_with_field(const BatchVelocityFn& field, const Tensor& zs,
                           const std::vector<Conditioning>& conds, std::uint64_t base_key,
                           double dropout_p);

// Evaluation-only CFM loss; advances rng by one draw for the base key.
double cfm_loss(const FlowModel& model, const Tensor& zs, const std::vector<Conditioning>& conds,
                Rng& rng, double dropout_p);

struct FlowTrainConfig {
  double dropout_p = 0.2;
  std::size_t batch_size = 256;
  std::size_t steps = 8000;
  AdamConfig adam{};
};

struct FlowTrainResult {
  FlowModel model;
  std::vector<double> step_losses;
};

// Trains the velocity field on precomputed latents (VAE frozen). When
// logvars is non-null, each visit re-samples z = mu + exp(0.5 logvar) * noise
// so training sees the posterior rather than its mean.
FlowTrainResult train_flow(const Tensor& mus, const Tensor* logvars,
                           const std::vector<Conditioning>& conds, const FlowConfig& model_config,
                           const FlowTrainConfig& train_config, Rng& rng);

}  // namespace latentflow
