#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "kasa/baselines.hpp"
#include "kasa/svd.hpp"
#include "oracles.hpp"

using kasa::Matrix;

namespace {

double rel_err(const Matrix& got, const Matrix& want) {
    return kasa::frobenius_norm(kasa::sub(got, want)) /
           std::max(1.0, kasa::frobenius_norm(want));
}

}  // namespace

TEST_CASE("lora starts at zero update") {
    const Matrix w0 = oracle::random_matrix(6, 4, 1);
    const auto ad = kasa::init_lora(w0, 3, 16.0, 5);
    CHECK(kasa::frobenius_norm(kasa::matmul(ad.a, ad.b)) == 0.0);
    CHECK(kasa::merge(ad) == w0);
    const Matrix big = oracle::random_matrix(10, 9, 2);
    CHECK(kasa::init_lora(big, 8, 16.0, 5).scaling == 2.0);

    const auto twin = kasa::init_lora(w0, 3, 16.0, 5);
    CHECK(twin.a == ad.a);
    CHECK(twin.b == ad.b);
    CHECK_THROWS(kasa::init_lora(w0, 0, 16.0, 5));
    CHECK_THROWS(kasa::init_lora(w0, 9, 16.0, 5));
}

TEST_CASE("pissa diagonal case") {
    const std::vector<double> d = {4, 1};
    const auto ad = kasa::init_pissa(Matrix::diagonal(d), 1, 0);
    const Matrix prod = kasa::matmul(ad.a, ad.b);
    CHECK(prod(0, 0) == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(std::abs(prod(1, 1)) < 1e-12);
    CHECK(std::abs(ad.frozen_base(0, 0)) < 1e-12);
    CHECK(ad.frozen_base(1, 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("milora diagonal case") {
    const std::vector<double> d = {4, 1};
    const auto ad = kasa::init_milora(Matrix::diagonal(d), 1, 0);
    const Matrix prod = kasa::matmul(ad.a, ad.b);
    CHECK(std::abs(prod(0, 0)) < 1e-12);
    CHECK(prod(1, 1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ad.frozen_base(0, 0) == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(std::abs(ad.frozen_base(1, 1)) < 1e-12);
}

TEST_CASE("pissa/milora reconstruct w0 and split the spectrum") {
    const Matrix w0 = oracle::random_matrix(8, 6, 2);
    const auto spectrum = kasa::svd(w0).sigma;
    const auto pissa = kasa::init_pissa(w0, 3, 0);
    const auto milora = kasa::init_milora(w0, 3, 0);

    CHECK(rel_err(kasa::add(pissa.frozen_base, kasa::matmul(pissa.a, pissa.b)), w0) < 1e-10);
    CHECK(rel_err(kasa::add(milora.frozen_base, kasa::matmul(milora.a, milora.b)), w0) < 1e-10);

    const double top = std::sqrt(spectrum[0] * spectrum[0] + spectrum[1] * spectrum[1] +
                                 spectrum[2] * spectrum[2]);
    const double tail = std::sqrt(spectrum[3] * spectrum[3] + spectrum[4] * spectrum[4] +
                                  spectrum[5] * spectrum[5]);
    CHECK(kasa::frobenius_norm(kasa::matmul(pissa.a, pissa.b)) ==
          doctest::Approx(top).epsilon(1e-10));
    CHECK(kasa::frobenius_norm(kasa::matmul(milora.a, milora.b)) ==
          doctest::Approx(tail).epsilon(1e-10));

    // Complementarity: pissa adapter + milora base use disjoint triplets, so
    // at r = p/2 the two products sum to w0.
    const auto pissa_half = kasa::init_pissa(w0, 3, 0);
    const auto milora_half = kasa::init_milora(w0, 3, 0);
    const Matrix sum = kasa::add(kasa::matmul(pissa_half.a, pissa_half.b),
                                 kasa::matmul(milora_half.a, milora_half.b));
    CHECK(rel_err(sum, w0) < 1e-9);
}

TEST_CASE("merge/forward equivalence across flavors") {
    const Matrix w0 = oracle::random_matrix(7, 5, 3);
    kasa::LowRankAdapter flavors[] = {
        kasa::init_lora(w0, 2, 16.0, 9),
        kasa::init_pissa(w0, 2, 9),
        kasa::init_milora(w0, 2, 9),
    };
    // give lora a nonzero b so the update participates
    kasa::Rng rng(10);
    for (double& v : flavors[0].b.data()) v = rng.normal();

    for (const auto& ad : flavors) {
        const Matrix merged = kasa::merge(ad);
        for (int trial = 0; trial < 10; ++trial) {
            const Matrix x = oracle::random_matrix(5, 3, 40 + static_cast<std::uint64_t>(trial));
            const Matrix got = kasa::forward(ad, x);
            const Matrix want = kasa::matmul(merged, x);
            for (std::size_t i = 0; i < got.size(); ++i) {
                CHECK(std::abs(got.data()[i] - want.data()[i]) <=
                      1e-12 * (1.0 + std::abs(want.data()[i])));
            }
        }
    }
    CHECK_THROWS(kasa::forward(flavors[0], Matrix(4, 1)));
}

TEST_CASE("parameter budget bookkeeping") {
    const Matrix w0 = oracle::random_matrix(10, 8, 4);
    const auto lora = kasa::init_lora(w0, 4, 16.0, 1);
    CHECK(lora.parameter_count() == 10 * 4 + 4 * 8);
}

TEST_CASE("low-rank checkpoint round-trips bitwise") {
    const Matrix w0 = oracle::random_matrix(5, 4, 6);
    const auto ad = kasa::init_pissa(w0, 2, 0);
    const std::string path =
        (std::filesystem::temp_directory_path() / "kasa_lowrank_ckpt.bin").string();
    kasa::save_checkpoint(ad, path);
    const auto back = kasa::load_checkpoint_lowrank(path);
    std::filesystem::remove(path);
    CHECK(back.flavor == kasa::AdapterFlavor::pissa);
    CHECK(back.a == ad.a);
    CHECK(back.b == ad.b);
    CHECK(back.frozen_base == ad.frozen_base);
    CHECK(back.scaling == ad.scaling);
}
