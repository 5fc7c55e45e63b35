// Independent test oracles: naive loops, a two-sided Jacobi symmetric
// eigensolver, and power iteration. Nothing here shares code with the
// library paths it checks.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "kasa/matrix.hpp"
#include "kasa/rng.hpp"

namespace oracle {

inline kasa::Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed,
                                  double scale = 1.0) {
    kasa::Rng rng(seed);
    kasa::Matrix m(rows, cols);
    for (double& v : m.data()) v = scale * rng.normal();
    return m;
}

inline kasa::Matrix naive_matmul(const kasa::Matrix& a, const kasa::Matrix& b) {
    kasa::Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
            out(i, j) = acc;
        }
    }
    return out;
}

inline double naive_frobenius(const kasa::Matrix& m) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) acc += m(i, j) * m(i, j);
    }
    return std::sqrt(acc);
}

inline double naive_defect(const kasa::Matrix& m) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m.cols(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            double dot = 0.0;
            for (std::size_t k = 0; k < m.rows(); ++k) dot += m(k, i) * m(k, j);
            if (i == j) dot -= 1.0;
            acc += dot * dot;
        }
    }
    return std::sqrt(acc);
}

/// Descending eigenvalues of a symmetric matrix by classic two-sided Jacobi.
inline std::vector<double> symmetric_eigenvalues(kasa::Matrix a) {
    const std::size_t n = a.rows();
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        }
        if (off < 1e-26) break;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = a(i, i);
    std::sort(eig.rbegin(), eig.rend());
    return eig;
}

/// Largest singular value of m by power iteration on m^T m.
inline double power_iteration_spectral_norm(const kasa::Matrix& m, int steps = 500,
                                            std::uint64_t seed = 12345) {
    kasa::Rng rng(seed);
    std::vector<double> v(m.cols());
    for (double& x : v) x = rng.normal();
    double norm = 0.0;
    for (int it = 0; it < steps; ++it) {
        std::vector<double> mv(m.rows(), 0.0);
        for (std::size_t i = 0; i < m.rows(); ++i) {
            for (std::size_t j = 0; j < m.cols(); ++j) mv[i] += m(i, j) * v[j];
        }
        std::vector<double> w(m.cols(), 0.0);
        for (std::size_t j = 0; j < m.cols(); ++j) {
            for (std::size_t i = 0; i < m.rows(); ++i) w[j] += m(i, j) * mv[i];
        }
        norm = 0.0;
        for (double x : w) norm += x * x;
        norm = std::sqrt(norm);
        if (norm == 0.0) return 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) v[j] = w[j] / norm;
    }
    // After convergence, ||m v|| approximates sigma_1.
    std::vector<double> mv(m.rows(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) mv[i] += m(i, j) * v[j];
    }
    double out = 0.0;
    for (double x : mv) out += x * x;
    return std::sqrt(out);
}

}  // namespace oracle
