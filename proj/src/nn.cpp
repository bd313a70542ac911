#include "latentflow/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace latentflow {

Var apply_activation(Var x, Activation act) {
  switch (act) {
    case Activation::identity:
      return x;
    case Activation::relu:
      return x.tape().relu(x);
    case Activation::elu:
      return x.tape().elu(x);
    case Activation::gelu:
      return x.tape().gelu(x);
  }
  throw std::invalid_argument("unknown activation");
}

std::string activation_name(Activation act) {
  switch (act) {
    case Activation::identity:
      return "identity";
    case Activation::relu:
      return "relu";
    case Activation::elu:
      return "elu";
    case Activation::gelu:
      return "gelu";
  }
  return "?";
}

Activation activation_from_name(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "elu") return Activation::elu;
  if (name == "gelu") return Activation::gelu;
  throw std::invalid_argument("unknown activation: " + name);
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng)
    : w(Shape{in, out}), b(Shape{out}) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  rng.fill_uniform(w, -limit, limit);
}

void Linear::zero_init() {
  w = Tensor::zeros(w.shape());
  b = Tensor::zeros(b.shape());
}

Var Linear::Bound::operator()(Var x) const {
  Tape& tape = x.tape();
  return tape.add_rowvec(tape.matmul(x, w), b);
}

Linear::Bound Linear::bind(Tape& tape, bool requires_grad) const {
  return Bound{tape.input(w, requires_grad), tape.input(b, requires_grad)};
}

void Linear::collect_params(const std::string& prefix, std::vector<NamedParam>& out) {
  out.push_back({prefix + ".w", &w});
  out.push_back({prefix + ".b", &b});
}

Mlp::Mlp(const std::vector<std::size_t>& dims, Activation act, Rng& rng) : act(act) {
  if (dims.size() < 2) throw std::invalid_argument("mlp: need at least input and output dims");
  layers.reserve(dims.size() - 1);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    layers.emplace_back(dims[i], dims[i + 1], rng);
  }
}

Var Mlp::Bound::operator()(Var x) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = layers[i](x);
    if (i + 1 < layers.size()) x = apply_activation(x, act);
  }
  return x;
}

Mlp::Bound Mlp::bind(Tape& tape, bool requires_grad) const {
  Bound bound;
  bound.act = act;
  bound.layers.reserve(layers.size());
  for (const Linear& l : layers) bound.layers.push_back(l.bind(tape, requires_grad));
  return bound;
}

void Mlp::collect_params(const std::string& prefix, std::vector<NamedParam>& out) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].collect_params(prefix + ".l" + std::to_string(i), out);
  }
}

}  // namespace latentflow
