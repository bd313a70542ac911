#include "latentflow/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace latentflow {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  for (std::size_t d : shape_) {
    if (d == 0) throw std::invalid_argument("tensor: zero extent in shape " + shape_str(shape_));
  }
  data_.assign(shape_numel(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw std::invalid_argument("tensor: shape " + shape_str(shape_) + " does not match " +
                                std::to_string(data_.size()) + " elements");
  }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::zeros(Shape shape) { return Tensor(std::move(shape)); }

Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(Shape shape, double value) {
  Tensor t(std::move(shape));
  for (double& v : t.data_) v = value;
  return t;
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw std::invalid_argument("tensor: rows() on rank-" + std::to_string(rank()));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw std::invalid_argument("tensor: cols() on rank-" + std::to_string(rank()));
  return shape_[1];
}

double& Tensor::at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

double Tensor::at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

double Tensor::item() const {
  if (data_.size() != 1) {
    throw std::invalid_argument("tensor: item() on shape " + shape_str(shape_));
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  std::vector<double> out(data_.begin() + r * c, data_.begin() + (r + 1) * c);
  return Tensor(Shape{c}, std::move(out));
}

bool operator==(const Tensor& a, const Tensor& b) {
  return a.shape_ == b.shape_ && a.data_ == b.data_;
}

}  // namespace latentflow
