#include "latentflow/tensor.hpp"

#include <limits>
#include <stdexcept>

#include "doctest.h"

using namespace latentflow;

TEST_SUITE_BEGIN("tensor");

TEST_CASE("shape and data must agree") {
  CHECK_THROWS_AS(Tensor(Shape{2, 3}, {1.0, 2.0}), std::invalid_argument);
  Tensor t(Shape{2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
}

TEST_CASE("scalar tensors have rank 0 and one element") {
  Tensor s = Tensor::scalar(4.25);
  CHECK(s.rank() == 0);
  CHECK(s.size() == 1);
  CHECK(s.item() == 4.25);
  CHECK_THROWS_AS(Tensor::zeros(Shape{2}).item(), std::invalid_argument);
}

TEST_CASE("zero extents are rejected") {
  CHECK_THROWS_AS(Tensor(Shape{2, 0}), std::invalid_argument);
}

TEST_CASE("2-D access is row-major") {
  Tensor t(Shape{2, 3}, {0, 1, 2, 3, 4, 5});
  CHECK(t.at(0, 2) == 2);
  CHECK(t.at(1, 0) == 3);
  Tensor r = t.row(1);
  CHECK(r.shape() == Shape{3});
  CHECK(r[0] == 3);
  CHECK(r[2] == 5);
}

TEST_CASE("finiteness check") {
  Tensor t(Shape{2}, {1.0, 2.0});
  CHECK(t.all_finite());
  t[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("equality is exact on shape and data") {
  Tensor a(Shape{2}, {1.0, 2.0});
  Tensor b(Shape{2}, {1.0, 2.0});
  Tensor c(Shape{1, 2}, {1.0, 2.0});
  CHECK(a == b);
  CHECK(a != c);
}

TEST_SUITE_END();
