#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <vector>

#include "latentflow/tensor.hpp"

namespace latentflow {

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const;
  bool defined() const { return tape_ != nullptr; }
  std::size_t id() const { return id_; }
  Tape& tape() const { return *tape_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode autodiff tape. Ops are recorded in the order they are built,
// which is a topological order by construction; backward() makes one reverse
// sweep and visits each node exactly once. Values are computed eagerly.
class Tape {
 public:
  enum class Op {
    input,
    add,
    sub,
    mul,
    scale,
    add_scalar,
    matmul,
    add_rowvec,
    relu,
    elu,
    gelu,
    exp,
    log,
    sum,
    mean,
    mse,
    concat_cols,
    slice_cols,
    reshape,
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf registration. The one-argument form takes requires_grad from the
  // tensor's own flag.
  Var input(const Tensor& t) { return input(t, t.requires_grad()); }
  Var input(const Tensor& t, bool requires_grad);

  const Tensor& value(Var v) const;
  // Gradient of the last backward() target w.r.t. v; zeros if v was never
  // reached by the sweep.
  Tensor grad(Var v) const;

  void backward(Var loss);

  std::size_t n_nodes() const { return nodes_.size(); }

  // Elementwise, same shape.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  // Affine with a plain constant.
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  // (m,k) x (k,n) -> (m,n)
  Var matmul(Var a, Var b);
  // (m,n) + broadcast row (n)
  Var add_rowvec(Var m, Var v);
  Var relu(Var a);
  // alpha = 1
  Var elu(Var a);
  // Exact erf form: gelu(x) = 0.5 x (1 + erf(x / sqrt(2))).
  Var gelu(Var a);
  Var exp(Var a);
  // Defined for positive inputs.
  Var log(Var a);
  // Reductions to a rank-0 scalar.
  Var sum(Var a);
  Var mean(Var a);
  // mean((a - b)^2) over all elements.
  Var mse(Var a, Var b);
  // (m,ca) ++ (m,cb) -> (m, ca+cb)
  Var concat_cols(Var a, Var b);
  Var slice_cols(Var a, std::size_t start, std::size_t len);
  // Same element count, new shape; gradient passes through unchanged.
  Var reshape(Var a, Shape shape);

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily during backward
    Op op = Op::input;
    std::array<std::size_t, 2> in{};
    int n_in = 0;
    bool requires_grad = false;
    double aux = 0.0;
    std::size_t aux_index = 0;
  };

  Var emit(Op op, Tensor value, std::initializer_list<Var> inputs, double aux = 0.0,
           std::size_t aux_index = 0);
  const Node& node(Var v) const;
  Tensor& grad_buffer(std::size_t id);
  void backward_node(std::size_t id);

  std::vector<Node> nodes_;
};

inline Var operator+(Var a, Var b) { return a.tape().add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape().sub(a, b); }
inline Var operator*(Var a, Var b) { return a.tape().mul(a, b); }

struct ForwardBackwardResult {
  double value = 0.0;
  std::vector<Tensor> grads;  // one per parameter, same shapes
};

// Evaluates a scalar loss expression of the given parameters and returns the
// loss value together with exact reverse-mode gradients. Parameters are
// registered with requires_grad forced on.
ForwardBackwardResult forward_backward(
    const std::function<Var(Tape&, const std::vector<Var>&)>& loss_expression,
    const std::vector<Tensor>& params);

// Max over coordinates of |autodiff - central difference| /
// (|central difference| + 1e-12) for a scalar function of one tensor.
double grad_check(const std::function<Var(Tape&, Var)>& scalar_function, const Tensor& point,
                  double step);

}  // namespace latentflow
