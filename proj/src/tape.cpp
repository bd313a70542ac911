#include "latentflow/tape.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace latentflow {

namespace {

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

constexpr double kInvSqrt2 = std::numbers::sqrt2 / 2.0;
const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);

}  // namespace

const Tensor& Var::value() const { return tape_->value(*this); }

const Shape& Var::shape() const { return tape_->value(*this).shape(); }

Var Tape::input(const Tensor& t, bool requires_grad) {
  nodes_.push_back(Node{});
  Node& n = nodes_.back();
  n.value = t;
  n.op = Op::input;
  n.requires_grad = requires_grad;
  return Var(this, nodes_.size() - 1);
}

const Tape::Node& Tape::node(Var v) const { return nodes_.at(v.id()); }

const Tensor& Tape::value(Var v) const { return node(v).value; }

Tensor Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.empty()) return Tensor::zeros(n.value.shape());
  return n.grad;
}

Var Tape::emit(Op op, Tensor value, std::initializer_list<Var> inputs, double aux,
               std::size_t aux_index) {
  Node n;
  n.value = std::move(value);
  n.op = op;
  n.aux = aux;
  n.aux_index = aux_index;
  for (Var v : inputs) {
    if (&v.tape() != this) throw std::invalid_argument("tape: mixing vars from different tapes");
    n.in[n.n_in++] = v.id();
    n.requires_grad = n.requires_grad || nodes_[v.id()].requires_grad;
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::add(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  check_same_shape("add", x, y);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return emit(Op::add, std::move(out), {a, b});
}

Var Tape::sub(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  check_same_shape("sub", x, y);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return emit(Op::sub, std::move(out), {a, b});
}

Var Tape::mul(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  check_same_shape("mul", x, y);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return emit(Op::mul, std::move(out), {a, b});
}

Var Tape::scale(Var a, double c) {
  const Tensor& x = value(a);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = c * x[i];
  return emit(Op::scale, std::move(out), {a}, c);
}

Var Tape::add_scalar(Var a, double c) {
  const Tensor& x = value(a);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + c;
  return emit(Op::add_scalar, std::move(out), {a}, c);
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  if (x.rank() != 2 || y.rank() != 2 || x.cols() != y.rows()) {
    throw std::invalid_argument("matmul: shape mismatch " + shape_str(x.shape()) + " vs " +
                                shape_str(y.shape()));
  }
  const std::size_t m = x.rows(), k = x.cols(), n = y.cols();
  Tensor out(Shape{m, n});
  const double* A = x.data();
  const double* B = y.data();
  double* C = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* Ci = C + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      const double* Bp = B + p * n;
      for (std::size_t j = 0; j < n; ++j) Ci[j] += av * Bp[j];
    }
  }
  return emit(Op::matmul, std::move(out), {a, b});
}

Var Tape::add_rowvec(Var m, Var v) {
  const Tensor& x = value(m);
  const Tensor& y = value(v);
  if (x.rank() != 2 || y.rank() != 1 || x.cols() != y.size()) {
    throw std::invalid_argument("add_rowvec: shape mismatch " + shape_str(x.shape()) + " vs " +
                                shape_str(y.shape()));
  }
  Tensor out(x.shape());
  const std::size_t rows = x.rows(), cols = x.cols();
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = x[i * cols + j] + y[j];
  }
  return emit(Op::add_rowvec, std::move(out), {m, v});
}

Var Tape::relu(Var a) {
  const Tensor& x = value(a);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return emit(Op::relu, std::move(out), {a});
}

Var Tape::elu(Var a) {
  const Tensor& x = value(a);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = x[i] > 0.0 ? x[i] : std::expm1(x[i]);
  }
  return emit(Op::elu, std::move(out), {a});
}

Var Tape::gelu(Var a) {
  // gelu(x) = x * Phi(x) with Phi the standard normal CDF,
  //         = 0.5 * x * (1 + erf(x / sqrt(2))).
  // d/dx gelu = Phi(x) + x * phi(x), phi(x) = exp(-x^2/2) / sqrt(2 pi).
  const Tensor& x = value(a);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * kInvSqrt2));
  }
  return emit(Op::gelu, std::move(out), {a});
}

Var Tape::exp(Var a) {
  const Tensor& x = value(a);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::exp(x[i]);
  return emit(Op::exp, std::move(out), {a});
}

Var Tape::log(Var a) {
  const Tensor& x = value(a);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::log(x[i]);
  return emit(Op::log, std::move(out), {a});
}

Var Tape::sum(Var a) {
  const Tensor& x = value(a);
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i];
  return emit(Op::sum, Tensor::scalar(acc), {a});
}

Var Tape::mean(Var a) {
  const Tensor& x = value(a);
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i];
  return emit(Op::mean, Tensor::scalar(acc / static_cast<double>(x.size())), {a});
}

Var Tape::mse(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  check_same_shape("mse", x, y);
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    acc += d * d;
  }
  return emit(Op::mse, Tensor::scalar(acc / static_cast<double>(x.size())), {a, b});
}

Var Tape::concat_cols(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  if (x.rank() != 2 || y.rank() != 2 || x.rows() != y.rows()) {
    throw std::invalid_argument("concat_cols: shape mismatch " + shape_str(x.shape()) + " vs " +
                                shape_str(y.shape()));
  }
  const std::size_t rows = x.rows(), ca = x.cols(), cb = y.cols();
  Tensor out(Shape{rows, ca + cb});
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < ca; ++j) out[i * (ca + cb) + j] = x[i * ca + j];
    for (std::size_t j = 0; j < cb; ++j) out[i * (ca + cb) + ca + j] = y[i * cb + j];
  }
  return emit(Op::concat_cols, std::move(out), {a, b});
}

Var Tape::slice_cols(Var a, std::size_t start, std::size_t len) {
  const Tensor& x = value(a);
  if (x.rank() != 2 || start + len > x.cols()) {
    throw std::invalid_argument("slice_cols: [" + std::to_string(start) + ", " +
                                std::to_string(start + len) + ") out of range for shape " +
                                shape_str(x.shape()));
  }
  const std::size_t rows = x.rows(), cols = x.cols();
  Tensor out(Shape{rows, len});
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < len; ++j) out[i * len + j] = x[i * cols + start + j];
  }
  return emit(Op::slice_cols, std::move(out), {a}, 0.0, start);
}

Var Tape::reshape(Var a, Shape shape) {
  const Tensor& x = value(a);
  if (shape_numel(shape) != x.size()) {
    throw std::invalid_argument("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape) +
                                " changes element count");
  }
  Tensor out(std::move(shape), x.vec());
  return emit(Op::reshape, std::move(out), {a});
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor::zeros(n.value.shape());
  return n.grad;
}

void Tape::backward(Var loss) {
  const Node& ln = node(loss);
  if (ln.value.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_str(ln.value.shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor();
  grad_buffer(loss.id())[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty() || n.op == Op::input) continue;
    backward_node(id);
  }
}

void Tape::backward_node(std::size_t id) {
  Node& n = nodes_[id];
  const Tensor& g = n.grad;
  auto in_rg = [&](int slot) { return nodes_[n.in[slot]].requires_grad; };

  switch (n.op) {
    case Op::input:
      break;
    case Op::add: {
      for (int s = 0; s < 2; ++s) {
        if (!in_rg(s)) continue;
        Tensor& gi = grad_buffer(n.in[s]);
        for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
      }
      break;
    }
    case Op::sub: {
      if (in_rg(0)) {
        Tensor& ga = grad_buffer(n.in[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (in_rg(1)) {
        Tensor& gb = grad_buffer(n.in[1]);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
      break;
    }
    case Op::mul: {
      const Tensor& a = nodes_[n.in[0]].value;
      const Tensor& b = nodes_[n.in[1]].value;
      if (in_rg(0)) {
        Tensor& ga = grad_buffer(n.in[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
      }
      if (in_rg(1)) {
        Tensor& gb = grad_buffer(n.in[1]);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
      }
      break;
    }
    case Op::scale: {
      if (in_rg(0)) {
        Tensor& ga = grad_buffer(n.in[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.aux * g[i];
      }
      break;
    }
    case Op::add_scalar: {
      if (in_rg(0)) {
        Tensor& ga = grad_buffer(n.in[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      break;
    }
    case Op::matmul: {
      const Tensor& a = nodes_[n.in[0]].value;
      const Tensor& b = nodes_[n.in[1]].value;
      const std::size_t m = a.rows(), k = a.cols(), nc = b.cols();
      if (in_rg(0)) {
        // dA = dC * B^T
        Tensor& ga = grad_buffer(n.in[0]);
        const double* G = g.data();
        const double* B = b.data();
        double* GA = ga.data();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            const double* Gi = G + i * nc;
            const double* Bp = B + p * nc;
            for (std::size_t j = 0; j < nc; ++j) acc += Gi[j] * Bp[j];
            GA[i * k + p] += acc;
          }
        }
      }
      if (in_rg(1)) {
        // dB = A^T * dC
        Tensor& gb = grad_buffer(n.in[1]);
        const double* G = g.data();
        const double* A = a.data();
        double* GB = gb.data();
        for (std::size_t i = 0; i < m; ++i) {
          const double* Gi = G + i * nc;
          for (std::size_t p = 0; p < k; ++p) {
            const double av = A[i * k + p];
            double* GBp = GB + p * nc;
            for (std::size_t j = 0; j < nc; ++j) GBp[j] += av * Gi[j];
          }
        }
      }
      break;
    }
    case Op::add_rowvec: {
      const Tensor& x = nodes_[n.in[0]].value;
      const std::size_t rows = x.rows(), cols = x.cols();
      if (in_rg(0)) {
        Tensor& gm = grad_buffer(n.in[0]);
        for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
      }
      if (in_rg(1)) {
        Tensor& gv = grad_buffer(n.in[1]);
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < cols; ++j) gv[j] += g[i * cols + j];
        }
      }
      break;
    }
    case Op::relu: {
      if (in_rg(0)) {
        const Tensor& x = nodes_[n.in[0]].value;
        Tensor& ga = grad_buffer(n.in[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += x[i] > 0.0 ? g[i] : 0.0;
      }
      break;
    }
    case Op::elu: {
      if (in_rg(0)) {
        const Tensor& x = nodes_[n.in[0]].value;
        const Tensor& y = n.value;
        Tensor& ga = grad_buffer(n.in[0]);
        // For x <= 0 the output is exp(x) - 1, so the derivative is y + 1.
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] * (x[i] > 0.0 ? 1.0 : y[i] + 1.0);
        }
      }
      break;
    }
    case Op::gelu: {
      if (in_rg(0)) {
        const Tensor& x = nodes_[n.in[0]].value;
        Tensor& ga = grad_buffer(n.in[0]);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double cdf = 0.5 * (1.0 + std::erf(x[i] * kInvSqrt2));
          const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x[i] * x[i]);
          ga[i] += g[i] * (cdf + x[i] * pdf);
        }
      }
      break;
    }
    case Op::exp: {
      if (in_rg(0)) {
        const Tensor& y = n.value;
        Tensor& ga = grad_buffer(n.in[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
      }
      break;
    }
    case Op::log: {
      if (in_rg(0)) {
        const Tensor& x = nodes_[n.in[0]].value;
        Tensor& ga = grad_buffer(n.in[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
      }
      break;
    }
    case Op::sum: {
      if (in_rg(0)) {
        Tensor& ga = grad_buffer(n.in[0]);
        const double gs = g[0];
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gs;
      }
      break;
    }
    case Op::mean: {
      if (in_rg(0)) {
        Tensor& ga = grad_buffer(n.in[0]);
        const double gs = g[0] / static_cast<double>(ga.size());
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gs;
      }
      break;
    }
    case Op::mse: {
      const Tensor& a = nodes_[n.in[0]].value;
      const Tensor& b = nodes_[n.in[1]].value;
      const double gs = 2.0 * g[0] / static_cast<double>(a.size());
      if (in_rg(0)) {
        Tensor& ga = grad_buffer(n.in[0]);
        for (std::size_t i = 0; i < a.size(); ++i) ga[i] += gs * (a[i] - b[i]);
      }
      if (in_rg(1)) {
        Tensor& gb = grad_buffer(n.in[1]);
        for (std::size_t i = 0; i < a.size(); ++i) gb[i] -= gs * (a[i] - b[i]);
      }
      break;
    }
    case Op::concat_cols: {
      const Tensor& a = nodes_[n.in[0]].value;
      const Tensor& b = nodes_[n.in[1]].value;
      const std::size_t rows = a.rows(), ca = a.cols(), cb = b.cols();
      if (in_rg(0)) {
        Tensor& ga = grad_buffer(n.in[0]);
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < ca; ++j) ga[i * ca + j] += g[i * (ca + cb) + j];
        }
      }
      if (in_rg(1)) {
        Tensor& gb = grad_buffer(n.in[1]);
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < cb; ++j) gb[i * cb + j] += g[i * (ca + cb) + ca + j];
        }
      }
      break;
    }
    case Op::slice_cols: {
      if (in_rg(0)) {
        const Tensor& x = nodes_[n.in[0]].value;
        const std::size_t rows = x.rows(), cols = x.cols(), len = n.value.cols();
        Tensor& ga = grad_buffer(n.in[0]);
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < len; ++j) {
            ga[i * cols + n.aux_index + j] += g[i * len + j];
          }
        }
      }
      break;
    }
    case Op::reshape: {
      if (in_rg(0)) {
        Tensor& ga = grad_buffer(n.in[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      break;
    }
  }
}

ForwardBackwardResult forward_backward(
    const std::function<Var(Tape&, const std::vector<Var>&)>& loss_expression,
    const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Tensor& p : params) vars.push_back(tape.input(p, true));
  Var loss = loss_expression(tape, vars);
  if (tape.value(loss).size() != 1) {
    throw std::invalid_argument("forward_backward: loss expression must produce a scalar, got " +
                                shape_str(tape.value(loss).shape()));
  }
  tape.backward(loss);
  ForwardBackwardResult result;
  result.value = tape.value(loss).item();
  result.grads.reserve(vars.size());
  for (Var v : vars) result.grads.push_back(tape.grad(v));
  return result;
}

double grad_check(const std::function<Var(Tape&, Var)>& scalar_function, const Tensor& point,
                  double step) {
  if (step <= 0.0) throw std::invalid_argument("grad_check: step must be positive");

  auto eval = [&](const Tensor& x) {
    Tape tape;
    Var out = scalar_function(tape, tape.input(x, false));
    if (tape.value(out).size() != 1) {
      throw std::invalid_argument("grad_check: function must produce a scalar, got " +
                                  shape_str(tape.value(out).shape()));
    }
    return tape.value(out).item();
  };

  const ForwardBackwardResult fb = forward_backward(
      [&](Tape& tape, const std::vector<Var>& vars) { return scalar_function(tape, vars[0]); },
      {point});

  double max_rel = 0.0;
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + step;
    const double f_plus = eval(probe);
    probe[i] = saved - step;
    const double f_minus = eval(probe);
    probe[i] = saved;
    const double central = (f_plus - f_minus) / (2.0 * step);
    const double rel = std::abs(fb.grads[0][i] - central) / (std::abs(central) + 1e-12);
    if (rel > max_rel) max_rel = rel;
  }
  return max_rel;
}

}  // namespace latentflow
