#include "bayrel/srca.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace bayrel {

std::vector<double> average_ranks(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&x](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && x[order[j]] == x[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = mid;
    i = j;
  }
  return ranks;
}

namespace {

bool is_constant(std::span<const double> x) {
  for (double v : x)
    if (v != x[0]) return false;
  return true;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  return cov / std::sqrt(va * vb);
}

}  // namespace

double spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("spearman: need two vectors of equal length >= 2");
  if (is_constant(x) || is_constant(y))
    throw std::invalid_argument("spearman: correlation undefined for a constant vector");
  return pearson(average_ranks(x), average_ranks(y));
}

SrcaResult srca_matrix(const Tensor& x1, const Tensor& x2) {
  if (x1.rank() != 2 || x2.rank() != 2 || x1.cols() != x2.cols())
    throw std::invalid_argument("srca: attribute matrices must share the sample dimension, got " +
                                shape_str(x1.shape) + " and " + shape_str(x2.shape));
  const std::size_t n1 = x1.rows(), n2 = x2.rows(), d = x1.cols();
  std::vector<std::vector<double>> ranks1(n1), ranks2(n2);
  std::vector<bool> const1(n1), const2(n2);
  for (std::size_t i = 0; i < n1; ++i) {
    std::span<const double> row(x1.data.data() + i * d, d);
    const1[i] = is_constant(row);
    if (!const1[i]) ranks1[i] = average_ranks(row);
  }
  for (std::size_t j = 0; j < n2; ++j) {
    std::span<const double> row(x2.data.data() + j * d, d);
    const2[j] = is_constant(row);
    if (!const2[j]) ranks2[j] = average_ranks(row);
  }
  SrcaResult res;
  res.matrix = Tensor::zeros({n1, n2});
  for (std::size_t i = 0; i < n1; ++i)
    for (std::size_t j = 0; j < n2; ++j) {
      if (const1[i] || const2[j]) {
        ++res.degenerate_rows;
        continue;  // |rho| stays 0
      }
      res.matrix(i, j) = std::fabs(pearson(ranks1[i], ranks2[j]));
    }
  return res;
}

}  // namespace bayrel
