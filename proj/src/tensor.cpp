#include "bayrel/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace bayrel {

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  if (shape_numel(shape) != data.size())
    throw std::invalid_argument("tensor: shape " + shape_str(shape) + " does not match " +
                                std::to_string(data.size()) + " values");
}

Tensor Tensor::zeros(const Shape& s) { return Tensor(s, std::vector<double>(shape_numel(s), 0.0)); }

Tensor Tensor::full(const Shape& s, double v) {
  return Tensor(s, std::vector<double>(shape_numel(s), v));
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

Tensor Tensor::eye(std::size_t n) {
  Tensor t = zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw std::logic_error("rows(): tensor is not rank 2, shape " + shape_str(shape));
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw std::logic_error("cols(): tensor is not rank 2, shape " + shape_str(shape));
  return shape[1];
}

double& Tensor::operator()(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }

double Tensor::operator()(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

double Tensor::item() const {
  if (data.size() != 1)
    throw std::logic_error("item(): tensor has " + std::to_string(data.size()) + " elements");
  return data[0];
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor matmul_raw(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw std::invalid_argument("matmul: operands must be rank 2, got " + shape_str(a.shape) +
                                " and " + shape_str(b.shape));
  const std::size_t m = trans_a ? a.cols() : a.rows();
  const std::size_t k = trans_a ? a.rows() : a.cols();
  const std::size_t kb = trans_b ? b.cols() : b.rows();
  const std::size_t n = trans_b ? b.rows() : b.cols();
  if (k != kb)
    throw std::invalid_argument("matmul: inner dimensions differ, " + shape_str(a.shape) +
                                (trans_a ? "^T" : "") + " x " + shape_str(b.shape) +
                                (trans_b ? "^T" : ""));
  Tensor c = Tensor::zeros({m, n});
  if (!trans_a && !trans_b) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        const double av = a(i, p);
        if (av == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) c(i, j) += av * b(p, j);
      }
  } else if (!trans_a && trans_b) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += a(i, p) * b(j, p);
        c(i, j) = s;
      }
  } else if (trans_a && !trans_b) {
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t i = 0; i < m; ++i) {
        const double av = a(p, i);
        if (av == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) c(i, j) += av * b(p, j);
      }
  } else {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += a(p, i) * b(j, p);
        c(i, j) = s;
      }
  }
  return c;
}

Tensor transpose_raw(const Tensor& a) {
  if (a.rank() != 2)
    throw std::invalid_argument("transpose: tensor must be rank 2, got " + shape_str(a.shape));
  Tensor t = Tensor::zeros({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

}  // namespace bayrel
