#include "kasa/matrix.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace kasa {

namespace {

void check_finite(std::span<const double> data) {
    for (double v : data) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("Matrix: non-finite entry");
        }
    }
}

void check_dims(std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0) {
        throw std::invalid_argument("Matrix: dimensions must be positive");
    }
}

// Work threshold below which the OpenMP kernels stay single-threaded.
constexpr std::size_t kParallelFlops = 1 << 16;

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {
    check_dims(rows, cols);
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    check_dims(rows, cols);
    if (data_.size() != rows * cols) {
        throw std::invalid_argument("Matrix: data length does not match dimensions");
    }
    check_finite(data_);
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diagonal(std::span<const double> entries) {
    Matrix m(entries.size(), entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) m(i, i) = entries[i];
    check_finite(m.data());
    return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dimensions disagree");
    }
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    Matrix out(n, m);
    const bool par = n * m * k >= kParallelFlops;
#pragma omp parallel for if (par)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            double acc = 0.0;
            for (std::size_t l = 0; l < k; ++l) {
                acc += a(static_cast<std::size_t>(i), l) * b(l, j);
            }
            out(static_cast<std::size_t>(i), j) = acc;
        }
    }
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            out(j, i) = m(i, j);
        }
    }
    return out;
}

Matrix scale(const Matrix& m, double factor) {
    Matrix out = m;
    const bool par = out.size() >= kParallelFlops;
    auto d = out.data();
#pragma omp parallel for if (par)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(d.size()); ++i) {
        d[static_cast<std::size_t>(i)] *= factor;
    }
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument("add: shape mismatch");
    }
    Matrix out = a;
    auto d = out.data();
    auto s = b.data();
    const bool par = d.size() >= kParallelFlops;
#pragma omp parallel for if (par)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(d.size()); ++i) {
        d[static_cast<std::size_t>(i)] += s[static_cast<std::size_t>(i)];
    }
    return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument("sub: shape mismatch");
    }
    Matrix out = a;
    auto d = out.data();
    auto s = b.data();
    const bool par = d.size() >= kParallelFlops;
#pragma omp parallel for if (par)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(d.size()); ++i) {
        d[static_cast<std::size_t>(i)] -= s[static_cast<std::size_t>(i)];
    }
    return out;
}

std::vector<double> matvec(const Matrix& m, std::span<const double> x) {
    if (m.cols() != x.size()) {
        throw std::invalid_argument("matvec: length mismatch");
    }
    std::vector<double> out(m.rows(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) acc += m(i, j) * x[j];
        out[i] = acc;
    }
    return out;
}

double frobenius_norm(const Matrix& m) {
    double acc = 0.0;
    for (double v : m.data()) acc += v * v;
    return std::sqrt(acc);
}

double orthogonality_defect(const Matrix& m) {
    const std::size_t p = m.cols();
    double acc = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j < p; ++j) {
            double dot = 0.0;
            for (std::size_t k = 0; k < m.rows(); ++k) dot += m(k, i) * m(k, j);
            const double target = (i == j) ? 1.0 : 0.0;
            const double d = dot - target;
            acc += d * d;
        }
    }
    return std::sqrt(acc);
}

namespace serial {

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dimensions disagree");
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t l = 0; l < a.cols(); ++l) acc += a(i, l) * b(l, j);
            out(i, j) = acc;
        }
    }
    return out;
}

double frobenius_norm(const Matrix& m) {
    double acc = 0.0;
    for (double v : m.data()) acc += v * v;
    return std::sqrt(acc);
}

}  // namespace serial

void save_text(const Matrix& m, std::ostream& out) {
    out << m.rows() << ' ' << m.cols() << '\n';
    char buf[64];
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
            if (j) out << ' ';
            out << buf;
        }
        out << '\n';
    }
}

Matrix load_text(std::istream& in) {
    std::size_t rows = 0, cols = 0;
    if (!(in >> rows >> cols)) {
        throw std::runtime_error("Matrix text load: bad header");
    }
    if (rows == 0 || cols == 0) {
        throw std::runtime_error("Matrix text load: zero dimension");
    }
    std::vector<double> data(rows * cols);
    for (double& v : data) {
        if (!(in >> v)) {
            throw std::runtime_error("Matrix text load: truncated data");
        }
    }
    return Matrix(rows, cols, std::move(data));
}

void save_text(const Matrix& m, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    save_text(m, f);
}

Matrix load_text(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open: " + path);
    return load_text(f);
}

void save_binary(const Matrix& m, std::ostream& out) {
    const std::uint64_t dims[2] = {m.rows(), m.cols()};
    out.write(reinterpret_cast<const char*>(dims), sizeof dims);
    out.write(reinterpret_cast<const char*>(m.data().data()),
              static_cast<std::streamsize>(m.size() * sizeof(double)));
}

Matrix load_binary(std::istream& in) {
    std::uint64_t dims[2] = {0, 0};
    in.read(reinterpret_cast<char*>(dims), sizeof dims);
    if (!in || dims[0] == 0 || dims[1] == 0) {
        throw std::runtime_error("Matrix binary load: bad header");
    }
    std::vector<double> data(dims[0] * dims[1]);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!in) throw std::runtime_error("Matrix binary load: truncated data");
    return Matrix(dims[0], dims[1], std::move(data));
}

void save_binary(const Matrix& m, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    save_binary(m, f);
}

Matrix load_binary(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    return load_binary(f);
}

}  // namespace kasa
