#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace icf {

// Dense row-major f64 array. Plain value type: copying copies the data,
// there is no view aliasing anywhere in this codebase.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> s)
      : shape(std::move(s)), data(numel_of(shape), 0.0) {}

  Tensor(std::vector<std::size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (numel_of(shape) != data.size()) {
      throw std::invalid_argument("Tensor: shape " + shape_str() + " does not match data size " +
                                  std::to_string(data.size()));
    }
  }

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) {
      if (d == 0) throw std::invalid_argument("Tensor: zero dimension in shape");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

  static Tensor full(std::vector<std::size_t> s, double v) {
    Tensor t(std::move(s));
    for (double& x : t.data) x = v;
    return t;
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  std::size_t numel() const { return data.size(); }
  std::size_t ndim() const { return shape.size(); }

  bool is_matrix() const { return shape.size() == 2; }

  std::size_t rows() const {
    require_matrix();
    return shape[0];
  }
  std::size_t cols() const {
    require_matrix();
    return shape[1];
  }

  // Size of the trailing dimension; any tensor is treated as a stack of
  // last-dim slices by the row-wise ops.
  std::size_t last_dim() const {
    if (shape.empty()) throw std::invalid_argument("Tensor: rank-0 tensor has no last dimension");
    return shape.back();
  }

  double& at(std::size_t r, std::size_t c) {
    require_matrix();
    return data[r * shape[1] + c];
  }
  double at(std::size_t r, std::size_t c) const {
    require_matrix();
    return data[r * shape[1] + c];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : data) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  std::string shape_str() const {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape[i]);
    }
    s += ")";
    return s;
  }

 private:
  void require_matrix() const {
    if (shape.size() != 2) {
      throw std::invalid_argument("Tensor: expected a matrix, got shape " + shape_str());
    }
  }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                                b.shape_str());
  }
}

}  // namespace icf
