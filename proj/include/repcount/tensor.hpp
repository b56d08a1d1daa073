#ifndef REPCOUNT_TENSOR_HPP
#define REPCOUNT_TENSOR_HPP

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "repcount/errors.hpp"

namespace repcount {

// Dense row-major f64 tensor. Storage is shared on copy (tapes hold many
// aliases of the same parameter tensors); by convention the contents are
// written once at creation and treated as immutable afterwards, except by
// the single owner that the optimizer updates between steps.
struct Tensor {
  std::vector<int> shape;
  std::shared_ptr<std::vector<double>> store;

  Tensor() = default;

  static Tensor zeros(std::vector<int> shp) {
    Tensor t;
    t.shape = std::move(shp);
    t.store = std::make_shared<std::vector<double>>(t.checked_numel(), 0.0);
    return t;
  }

  static Tensor from(std::vector<int> shp, std::vector<double> values) {
    Tensor t;
    t.shape = std::move(shp);
    if (static_cast<int64_t>(values.size()) != t.checked_numel())
      throw shape_error("tensor data length does not match shape");
    t.store = std::make_shared<std::vector<double>>(std::move(values));
    return t;
  }

  static Tensor scalar(double v) { return from({1}, {v}); }

  int rank() const { return static_cast<int>(shape.size()); }

  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  int64_t numel() const {
    int64_t n = 1;
    for (int e : shape) n *= e;
    return n;
  }

  double* data() { return store->data(); }
  const double* data() const { return store->data(); }

  double& at(int i) { return (*store)[static_cast<size_t>(i)]; }
  const double& at(int i) const { return (*store)[static_cast<size_t>(i)]; }
  double& at(int i, int j) { return (*store)[static_cast<size_t>(i) * dim(1) + j]; }
  const double& at(int i, int j) const { return (*store)[static_cast<size_t>(i) * dim(1) + j]; }
  double& at(int i, int j, int k) {
    return (*store)[(static_cast<size_t>(i) * dim(1) + j) * dim(2) + k];
  }
  const double& at(int i, int j, int k) const {
    return (*store)[(static_cast<size_t>(i) * dim(1) + j) * dim(2) + k];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : *store)
      if (!std::isfinite(v)) return false;
    return true;
  }

  // deep copy with fresh storage
  Tensor clone() const {
    Tensor t;
    t.shape = shape;
    t.store = std::make_shared<std::vector<double>>(*store);
    return t;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ")";
    return os.str();
  }

 private:
  int64_t checked_numel() const {
    int64_t n = 1;
    for (int e : shape) {
      if (e <= 0) throw shape_error("tensor extents must be positive");
      n *= e;
    }
    return n;
  }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw shape_error(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace repcount

#endif
