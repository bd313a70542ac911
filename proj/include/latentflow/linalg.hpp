#pragma once

#include <cstddef>
#include <vector>

#include "latentflow/tensor.hpp"

namespace latentflow {

// Solves A x = b for symmetric positive definite A (k, k) in place via
// Cholesky. Returns false when A is not numerically SPD.
bool cholesky_solve(const Tensor& A, const std::vector<double>& b, std::vector<double>& x);

struct EighResult {
  std::vector<double> eigenvalues;  // descending
  Tensor eigenvectors;              // (d, d), column i pairs with eigenvalue i
};

// Cyclic Jacobi eigendecomposition of a symmetric matrix.
EighResult jacobi_eigh(const Tensor& sym);

}  // namespace latentflow
