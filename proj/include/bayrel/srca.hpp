#pragma once

#include <span>

#include "bayrel/tensor.hpp"

namespace bayrel {

// Average ranks (midranks for ties), 1-based; sums to n(n+1)/2.
std::vector<double> average_ranks(std::span<const double> x);

// Pearson correlation of average ranks. Throws on a constant vector.
double spearman_rho(std::span<const double> x, std::span<const double> y);

struct SrcaResult {
  Tensor matrix;  // |rho| per cross-view row pair
  std::size_t degenerate_rows = 0;
};

// Entry (i, j) = |spearman_rho(row_i of x1, row_j of x2)|; pairs with a
// constant row score 0 and are counted in degenerate_rows.
SrcaResult srca_matrix(const Tensor& x1, const Tensor& x2);

}  // namespace bayrel
