#include "latentflow/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace latentflow {

bool cholesky_solve(const Tensor& A, const std::vector<double>& b, std::vector<double>& x) {
  if (A.rank() != 2 || A.rows() != A.cols() || A.rows() != b.size()) {
    throw std::invalid_argument("cholesky_solve: A " + shape_str(A.shape()) + " vs b of " +
                                std::to_string(b.size()));
  }
  const std::size_t n = A.rows();
  Tensor L(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double acc = A.at(i, j);
      for (std::size_t k = 0; k < j; ++k) acc -= L.at(i, k) * L.at(j, k);
      if (i == j) {
        if (acc <= 0.0 || !std::isfinite(acc)) return false;
        L.at(i, i) = std::sqrt(acc);
      } else {
        L.at(i, j) = acc / L.at(j, j);
      }
    }
  }
  // Forward then backward substitution.
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = b[i];
    for (std::size_t k = 0; k < i; ++k) acc -= L.at(i, k) * y[k];
    y[i] = acc / L.at(i, i);
  }
  x.assign(n, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    double acc = y[i];
    for (std::size_t k = i + 1; k < n; ++k) acc -= L.at(k, i) * x[k];
    x[i] = acc / L.at(i, i);
  }
  return true;
}

EighResult jacobi_eigh(const Tensor& sym) {
  if (sym.rank() != 2 || sym.rows() != sym.cols()) {
    throw std::invalid_argument("jacobi_eigh: need a square matrix, got " +
                                shape_str(sym.shape()));
  }
  const std::size_t n = sym.rows();
  Tensor a = sym;
  Tensor v(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) v.at(i, i) = 1.0;

  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += a.at(p, q) * a.at(p, q);
    }
    if (off < 1e-24) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a.at(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a.at(k, p), akq = a.at(k, q);
          a.at(k, p) = c * akp - s * akq;
          a.at(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a.at(p, k), aqk = a.at(q, k);
          a.at(p, k) = c * apk - s * aqk;
          a.at(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v.at(k, p), vkq = v.at(k, q);
          v.at(k, p) = c * vkp - s * vkq;
          v.at(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return a.at(i, i) > a.at(j, j); });

  EighResult result;
  result.eigenvalues.resize(n);
  result.eigenvectors = Tensor(Shape{n, n});
  for (std::size_t j = 0; j < n; ++j) {
    result.eigenvalues[j] = a.at(order[j], order[j]);
    for (std::size_t i = 0; i < n; ++i) result.eigenvectors.at(i, j) = v.at(i, order[j]);
  }
  return result;
}

}  // namespace latentflow
