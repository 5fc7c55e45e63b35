#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace kasa {

/// Dense row-major matrix of 64-bit reals. Constructors reject NaN/Inf and
/// dimension mismatches; every instance satisfies data.size() == rows*cols.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);
    static Matrix diagonal(std::span<const double> entries);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// OpenMP-parallel kernels. Each output element is produced by exactly one
// thread with a fixed serial accumulation order, so results are bitwise
// identical to the serial reference regardless of thread count.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
Matrix scale(const Matrix& m, double factor);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
std::vector<double> matvec(const Matrix& m, std::span<const double> x);

double frobenius_norm(const Matrix& m);

/// ||m^T m - I_cols||_F
double orthogonality_defect(const Matrix& m);

namespace serial {
// Plain triple-loop reference kernels, kept for testing and benchmarking
// against the parallel versions above.
Matrix matmul(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& m);
}  // namespace serial

// Text format: first line "rows cols", then one row per line with 17
// significant digits. Binary format: two little-endian u64 dims followed by
// rows*cols little-endian doubles; round-trips bit-exactly.
void save_text(const Matrix& m, std::ostream& out);
Matrix load_text(std::istream& in);
void save_text(const Matrix& m, const std::string& path);
Matrix load_text(const std::string& path);

void save_binary(const Matrix& m, std::ostream& out);
Matrix load_binary(std::istream& in);
void save_binary(const Matrix& m, const std::string& path);
Matrix load_binary(const std::string& path);

}  // namespace kasa
