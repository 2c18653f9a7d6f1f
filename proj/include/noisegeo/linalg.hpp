#pragma once

#include <vector>

#include "noisegeo/tensor.hpp"

namespace noisegeo {

/// Thin singular value decomposition M = U diag(s) V^T.
/// For an m x n input with k = min(m, n): U is m x k, V is n x k, s has k
/// entries in descending order.
struct Svd {
    Tensor u;
    std::vector<double> singular_values;
    Tensor v;
};

/// One-sided (Hestenes) Jacobi SVD.
Svd svd(const Tensor& m);

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Eigenvalues are descending; eigenvectors are the matching columns.
struct SymmetricEigen {
    std::vector<double> values;
    Tensor vectors;
};

SymmetricEigen symmetric_eigen(const Tensor& s);

/// Sample covariance of the rows of an n x m matrix (divisor n - 1).
Tensor covariance(const Tensor& samples);
/// Column means of an n x m matrix.
Tensor column_mean(const Tensor& samples);

/// Covariance eigenvalues of the rows of `samples`, divided by their sum and
/// sorted descending. Throws on fewer than two samples or a covariance that is
/// identically zero ("degenerate covariance").
std::vector<double> pca_strengths(const Tensor& samples);

}  // namespace noisegeo
