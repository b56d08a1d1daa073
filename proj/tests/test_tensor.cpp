#include <doctest.h>

#include <cmath>
#include <vector>

#include "repcount/errors.hpp"
#include "repcount/tensor.hpp"

using repcount::Tensor;

TEST_CASE("zeros builds the requested shape filled with zero") {
  Tensor t = Tensor::zeros({3, 4});
  CHECK(t.rank() == 2);
  CHECK(t.dim(0) == 3);
  CHECK(t.dim(1) == 4);
  CHECK(t.numel() == 12);
  for (int i = 0; i < 12; ++i) CHECK(t.at(i) == 0.0);
}

TEST_CASE("from stores values row-major") {
  Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.at(0, 0) == 1.0);
  CHECK(t.at(0, 2) == 3.0);
  CHECK(t.at(1, 0) == 4.0);
  CHECK(t.at(1, 2) == 6.0);
}

TEST_CASE("three-index accessor addresses the innermost dimension fastest") {
  Tensor t = Tensor::from({2, 2, 2}, {0, 1, 2, 3, 4, 5, 6, 7});
  CHECK(t.at(0, 0, 1) == 1.0);
  CHECK(t.at(0, 1, 0) == 2.0);
  CHECK(t.at(1, 0, 0) == 4.0);
  CHECK(t.at(1, 1, 1) == 7.0);
}

TEST_CASE("from rejects a value count that does not match the shape") {
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), repcount::shape_error);
}

TEST_CASE("non-positive extents are rejected") {
  CHECK_THROWS_AS(Tensor::zeros({0, 3}), repcount::shape_error);
  CHECK_THROWS_AS(Tensor::zeros({2, -1}), repcount::shape_error);
}

TEST_CASE("scalar wraps one value in a rank-1 tensor") {
  Tensor t = Tensor::scalar(2.5);
  CHECK(t.rank() == 1);
  CHECK(t.numel() == 1);
  CHECK(t.at(0) == 2.5);
}

TEST_CASE("copy shares storage, clone does not") {
  Tensor t = Tensor::from({2}, {1, 2});
  Tensor alias = t;
  Tensor deep = t.clone();
  t.at(0) = 99.0;
  CHECK(alias.at(0) == 99.0);
  CHECK(deep.at(0) == 1.0);
}

TEST_CASE("same_shape compares extents only") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor c = Tensor::zeros({3, 2});
  CHECK(a.same_shape(b));
  CHECK(!a.same_shape(c));
}

TEST_CASE("all_finite detects NaN and infinity") {
  Tensor t = Tensor::from({3}, {1.0, 2.0, 3.0});
  CHECK(t.all_finite());
  t.at(1) = std::nan("");
  CHECK(!t.all_finite());
  t.at(1) = INFINITY;
  CHECK(!t.all_finite());
}

TEST_CASE("shape_str formats extents in parentheses") {
  CHECK(Tensor::zeros({2, 3}).shape_str() == "(2,3)");
  CHECK(Tensor::scalar(0.0).shape_str() == "(1)");
}

TEST_CASE("require_same_shape throws with the op name in the message") {
  Tensor a = Tensor::zeros({2});
  Tensor b = Tensor::zeros({3});
  CHECK_THROWS_WITH_AS(repcount::require_same_shape(a, b, "add"),
                       doctest::Contains("add"), repcount::shape_error);
}
