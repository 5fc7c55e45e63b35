#include "kasa/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace kasa {

namespace {

constexpr int kMaxSweeps = 30;
constexpr double kConvergence = 1e-12;  // relative off-diagonal threshold

// Hestenes one-sided Jacobi on a tall-or-square matrix (rows >= cols).
// Columns of `a` are orthogonalized in place; `v` accumulates rotations.
void jacobi_sweeps(Matrix& a, Matrix& v, std::size_t rows, std::size_t cols) {
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < cols; ++p) {
            for (std::size_t q = p + 1; q < cols; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::size_t k = 0; k < rows; ++k) {
                    const double x = a(k, p), y = a(k, q);
                    app += x * x;
                    aqq += y * y;
                    apq += x * y;
                }
                if (std::abs(apq) <= kConvergence * std::sqrt(app * aqq)) {
                    continue;
                }
                rotated = true;
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t k = 0; k < rows; ++k) {
                    const double x = a(k, p), y = a(k, q);
                    a(k, p) = c * x - s * y;
                    a(k, q) = s * x + c * y;
                }
                for (std::size_t k = 0; k < cols; ++k) {
                    const double x = v(k, p), y = v(k, q);
                    v(k, p) = c * x - s * y;
                    v(k, q) = s * x + c * y;
                }
            }
        }
        if (!rotated) return;
    }
    throw std::runtime_error("svd: Jacobi iteration did not converge for " +
                             std::to_string(rows) + "x" + std::to_string(cols) +
                             " matrix after " + std::to_string(kMaxSweeps) +
                             " sweeps");
}

// Replace an exactly-zero column of u with a unit vector orthogonal to all
// other columns, chosen deterministically from the standard basis.
void complete_column(Matrix& u, std::size_t col) {
    const std::size_t n = u.rows(), p = u.cols();
    for (std::size_t cand = 0; cand < n; ++cand) {
        std::vector<double> w(n, 0.0);
        w[cand] = 1.0;
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t j = 0; j < p; ++j) {
                if (j == col) continue;
                double dot = 0.0;
                for (std::size_t k = 0; k < n; ++k) dot += w[k] * u(k, j);
                for (std::size_t k = 0; k < n; ++k) w[k] -= dot * u(k, j);
            }
        }
        double norm = 0.0;
        for (double x : w) norm += x * x;
        norm = std::sqrt(norm);
        if (norm > 0.5) {
            for (std::size_t k = 0; k < n; ++k) u(k, col) = w[k] / norm;
            return;
        }
    }
    throw std::runtime_error("svd: failed to complete orthonormal basis");
}

SvdFactors svd_tall(const Matrix& m) {
    const std::size_t n = m.rows(), p = m.cols();
    Matrix a = m;
    Matrix v = Matrix::identity(p);
    jacobi_sweeps(a, v, n, p);

    std::vector<double> sigma(p, 0.0);
    for (std::size_t j = 0; j < p; ++j) {
        double norm = 0.0;
        for (std::size_t k = 0; k < n; ++k) norm += a(k, j) * a(k, j);
        sigma[j] = std::sqrt(norm);
    }

    std::vector<std::size_t> order(p);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return sigma[i] > sigma[j]; });

    SvdFactors f{Matrix(n, p), std::vector<double>(p), Matrix(p, p)};
    for (std::size_t j = 0; j < p; ++j) {
        const std::size_t src = order[j];
        f.sigma[j] = sigma[src];
        for (std::size_t k = 0; k < p; ++k) f.v(k, j) = v(k, src);
        if (sigma[src] > 0.0) {
            for (std::size_t k = 0; k < n; ++k) f.u(k, j) = a(k, src) / sigma[src];
        }
    }
    for (std::size_t j = 0; j < p; ++j) {
        if (f.sigma[j] == 0.0) complete_column(f.u, j);
    }

    // Sign convention: largest-magnitude entry of each u column nonnegative.
    for (std::size_t j = 0; j < p; ++j) {
        std::size_t pivot = 0;
        double best = -1.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double mag = std::abs(f.u(k, j));
            if (mag > best) {
                best = mag;
                pivot = k;
            }
        }
        if (f.u(pivot, j) < 0.0) {
            for (std::size_t k = 0; k < n; ++k) f.u(k, j) = -f.u(k, j);
            for (std::size_t k = 0; k < p; ++k) f.v(k, j) = -f.v(k, j);
        }
    }
    return f;
}

}  // namespace

SvdFactors svd(const Matrix& m) {
    if (m.rows() >= m.cols()) {
        return svd_tall(m);
    }
    SvdFactors f = svd_tall(transpose(m));
    std::swap(f.u, f.v);
    // Re-apply the sign convention in terms of the returned u.
    const std::size_t n = f.u.rows(), p = f.u.cols();
    for (std::size_t j = 0; j < p; ++j) {
        std::size_t pivot = 0;
        double best = -1.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double mag = std::abs(f.u(k, j));
            if (mag > best) {
                best = mag;
                pivot = k;
            }
        }
        if (f.u(pivot, j) < 0.0) {
            for (std::size_t k = 0; k < n; ++k) f.u(k, j) = -f.u(k, j);
            for (std::size_t k = 0; k < f.v.rows(); ++k) f.v(k, j) = -f.v(k, j);
        }
    }
    return f;
}

Matrix reconstruct(const SvdFactors& f) {
    Matrix scaled = f.u;
    for (std::size_t i = 0; i < scaled.rows(); ++i) {
        for (std::size_t j = 0; j < scaled.cols(); ++j) {
            scaled(i, j) *= f.sigma[j];
        }
    }
    return matmul(scaled, transpose(f.v));
}

}  // namespace kasa
