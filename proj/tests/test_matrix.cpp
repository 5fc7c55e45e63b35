#include <cmath>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "kasa/matrix.hpp"
#include "oracles.hpp"

using kasa::Matrix;

TEST_CASE("constructors validate dimensions and finiteness") {
    CHECK_THROWS(Matrix(0, 3));
    CHECK_THROWS(Matrix(2, 2, {1, 2, 3}));
    CHECK_THROWS(Matrix(1, 2, {1.0, std::numeric_limits<double>::quiet_NaN()}));
    CHECK_THROWS(Matrix(1, 1, {std::numeric_limits<double>::infinity()}));
    const Matrix m(3, 4);
    CHECK(m.size() == 12);
}

TEST_CASE("frobenius norm") {
    CHECK(kasa::frobenius_norm(Matrix(3, 3)) == 0.0);
    CHECK(kasa::frobenius_norm(Matrix::identity(3)) == doctest::Approx(std::sqrt(3.0)).epsilon(1e-15));
    CHECK(kasa::frobenius_norm(Matrix(1, 2, {3, 4})) == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("orthogonality defect") {
    CHECK(kasa::orthogonality_defect(Matrix::identity(4)) == 0.0);
    // single column of norm 2: |4 - 1| = 3
    CHECK(kasa::orthogonality_defect(Matrix(2, 1, {2, 0})) == doctest::Approx(3.0).epsilon(1e-15));
    const Matrix m = oracle::random_matrix(4, 2, 42);
    CHECK(kasa::orthogonality_defect(m) == doctest::Approx(oracle::naive_defect(m)).epsilon(1e-13));
}

TEST_CASE("arithmetic against naive loop oracles") {
    const Matrix a = oracle::random_matrix(7, 5, 1);
    const Matrix b = oracle::random_matrix(5, 9, 2);
    const Matrix ab = kasa::matmul(a, b);
    const Matrix want = oracle::naive_matmul(a, b);
    for (std::size_t i = 0; i < ab.size(); ++i) {
        CHECK(ab.data()[i] == doctest::Approx(want.data()[i]).epsilon(1e-13));
    }
    CHECK_THROWS(kasa::matmul(a, a));

    const Matrix at = kasa::transpose(a);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) CHECK(at(j, i) == a(i, j));
    }

    CHECK(kasa::frobenius_norm(a) ==
          doctest::Approx(oracle::naive_frobenius(a)).epsilon(1e-14));

    std::vector<double> x(5);
    for (std::size_t i = 0; i < 5; ++i) x[i] = static_cast<double>(i) - 2.0;
    const auto y = kasa::matvec(a, x);
    const Matrix xm(5, 1, std::vector<double>(x.begin(), x.end()));
    const Matrix want_y = oracle::naive_matmul(a, xm);
    for (std::size_t i = 0; i < y.size(); ++i) {
        CHECK(y[i] == doctest::Approx(want_y(i, 0)).epsilon(1e-13));
    }
}

TEST_CASE("matmul parallel kernel matches serial reference bitwise") {
    const Matrix a = oracle::random_matrix(70, 60, 3);
    const Matrix b = oracle::random_matrix(60, 80, 4);
    CHECK(kasa::matmul(a, b) == kasa::serial::matmul(a, b));
}

TEST_CASE("matmul associativity on seeded triples") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Matrix a = oracle::random_matrix(6, 4, seed * 3 + 1);
        const Matrix b = oracle::random_matrix(4, 7, seed * 3 + 2);
        const Matrix c = oracle::random_matrix(7, 5, seed * 3 + 3);
        const Matrix left = kasa::matmul(kasa::matmul(a, b), c);
        const Matrix right = kasa::matmul(a, kasa::matmul(b, c));
        const double denom = std::max(1.0, kasa::frobenius_norm(left));
        CHECK(kasa::frobenius_norm(kasa::sub(left, right)) / denom < 1e-12);
    }
}

TEST_CASE("text serialization round-trips") {
    const Matrix m = oracle::random_matrix(5, 3, 9);
    std::stringstream ss;
    kasa::save_text(m, ss);
    const Matrix back = kasa::load_text(ss);
    CHECK(back == m);  // 17 significant digits are lossless for doubles
}

TEST_CASE("binary serialization round-trips bitwise") {
    const Matrix m = oracle::random_matrix(6, 7, 10);
    std::stringstream ss;
    kasa::save_binary(m, ss);
    CHECK(kasa::load_binary(ss) == m);
}

TEST_CASE("malformed inputs rejected") {
    std::stringstream bad("2 2\n1 2\n3");
    CHECK_THROWS(kasa::load_text(bad));
    std::stringstream empty;
    CHECK_THROWS(kasa::load_binary(empty));
}
