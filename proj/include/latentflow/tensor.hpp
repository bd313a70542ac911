#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace latentflow {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Dense row-major tensor of 64-bit floats. Rank 0 holds a single scalar.
// The requires_grad flag marks parameter tensors; a Tape binds to it when
// the tensor is registered as an input.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, double value);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // 2-D accessors; throw unless rank() == 2.
  std::size_t rows() const;
  std::size_t cols() const;
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Value of a single-element tensor; throws otherwise.
  double item() const;

  bool requires_grad() const { return requires_grad_; }
  Tensor& set_requires_grad(bool v) {
    requires_grad_ = v;
    return *this;
  }

  bool all_finite() const;

  // Extracts row r of a rank-2 tensor as a rank-1 tensor.
  Tensor row(std::size_t r) const;

  friend bool operator==(const Tensor& a, const Tensor& b);
  friend bool operator!=(const Tensor& a, const Tensor& b) { return !(a == b); }

 private:
  Shape shape_;
  std::vector<double> data_;
  bool requires_grad_ = false;
};

}  // namespace latentflow
