#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace bayrel {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense row-major 64-bit float array. Rank 0 (empty shape) is a scalar
// holding one value.
struct Tensor {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> d);

  static Tensor zeros(const Shape& s);
  static Tensor full(const Shape& s, double v);
  static Tensor scalar(double v);
  static Tensor eye(std::size_t n);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator()(std::size_t i, std::size_t j);
  double operator()(std::size_t i, std::size_t j) const;
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  // Scalar value of a single-element tensor.
  double item() const;

  bool all_finite() const;
  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

// C = op(A) x op(B) with optional transposes. Throws on inner-dimension
// mismatch, naming both shapes.
Tensor matmul_raw(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b);

Tensor transpose_raw(const Tensor& a);

}  // namespace bayrel
