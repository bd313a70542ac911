#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "latentflow/rng.hpp"
#include "latentflow/tape.hpp"
#include "latentflow/tensor.hpp"

namespace latentflow {

enum class Activation { identity, relu, elu, gelu };

Var apply_activation(Var x, Activation act);

std::string activation_name(Activation act);
Activation activation_from_name(const std::string& name);

struct NamedParam {
  std::string name;
  Tensor* tensor;
};

// Fully connected layer, weights (in, out), bias (out). Glorot-uniform init.
struct Linear {
  Tensor w;
  Tensor b;

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng);

  std::size_t in_dim() const { return w.rows(); }
  std::size_t out_dim() const { return w.cols(); }

  void zero_init();

  struct Bound {
    Var w;
    Var b;
    // x: (n, in) -> (n, out)
    Var operator()(Var x) const;
  };
  Bound bind(Tape& tape, bool requires_grad) const;

  void collect_params(const std::string& prefix, std::vector<NamedParam>& out);
};

// Plain MLP: dims = {in, h1, ..., out}; activation between layers only.
struct Mlp {
  std::vector<Linear> layers;
  Activation act = Activation::relu;

  Mlp() = default;
  Mlp(const std::vector<std::size_t>& dims, Activation act, Rng& rng);

  std::size_t in_dim() const { return layers.front().in_dim(); }
  std::size_t out_dim() const { return layers.back().out_dim(); }

  struct Bound {
    std::vector<Linear::Bound> layers;
    Activation act = Activation::relu;
    Var operator()(Var x) const;
  };
  Bound bind(Tape& tape, bool requires_grad) const;

  void collect_params(const std::string& prefix, std::vector<NamedParam>& out);
};

}  // namespace latentflow
