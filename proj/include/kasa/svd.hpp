#pragma once

#include <vector>

#include "kasa/matrix.hpp"

namespace kasa {

/// Thin SVD of an n x m matrix: u is n x p, v is m x p, p = min(n, m),
/// sigma descending and nonnegative, u^T u = v^T v = I_p.
struct SvdFactors {
    Matrix u;
    std::vector<double> sigma;
    Matrix v;
};

/// One-sided Jacobi SVD. Deterministic: fixed rotation order, descending
/// stable sort of the spectrum, and a sign convention that makes the
/// largest-magnitude entry of each column of u nonnegative (ties broken by
/// lowest row index). Throws on non-convergence after the sweep cap, naming
/// the offending dimensions.
SvdFactors svd(const Matrix& m);

/// u * diag(sigma) * v^T
Matrix reconstruct(const SvdFactors& f);

}  // namespace kasa
