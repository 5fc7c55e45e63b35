#include <cmath>

#include "doctest.h"
#include "kasa/objective.hpp"
#include "kasa/svd.hpp"
#include "oracles.hpp"

using kasa::Batch;
using kasa::Matrix;

namespace {

kasa::TruncatedBase make_base(std::size_t n, std::size_t m, std::uint64_t seed,
                              std::size_t k = 1) {
    return kasa::truncate_base(oracle::random_matrix(n, m, seed), k);
}

kasa::KasaAdapter make_adapter(const kasa::TruncatedBase& base, std::size_t r,
                               std::uint64_t seed, bool perturb_u = true) {
    auto ad = kasa::init_kasa(base, r, 16.0, seed);
    if (perturb_u) {
        kasa::Rng rng(seed + 1000);
        for (double& v : ad.delta_u.data()) v = 0.2 * rng.normal();
    }
    return ad;
}

Batch make_batch(const kasa::TruncatedBase& base, std::size_t b, std::uint64_t seed) {
    Batch batch;
    batch.kind = kasa::LossKind::mse;
    batch.inputs = oracle::random_matrix(base.in_dim(), b, seed);
    batch.targets = oracle::random_matrix(base.out_dim(), b, seed + 1);
    return batch;
}

// Semi-orthogonal factors harvested from an SVD.
kasa::KasaAdapter orthonormal_adapter(const kasa::TruncatedBase& base, std::size_t r,
                                      std::uint64_t seed) {
    const auto fu = kasa::svd(oracle::random_matrix(base.out_dim(), base.out_dim(), seed));
    const auto fv = kasa::svd(oracle::random_matrix(base.in_dim(), base.in_dim(), seed + 1));
    kasa::KasaAdapter ad;
    ad.rank_r = r;
    ad.alpha = static_cast<double>(r);
    ad.eta = 1.0;
    ad.delta_u = Matrix(base.out_dim(), r);
    ad.delta_v = Matrix(base.in_dim(), r);
    for (std::size_t i = 0; i < base.out_dim(); ++i) {
        for (std::size_t j = 0; j < r; ++j) ad.delta_u(i, j) = fu.u(i, j);
    }
    for (std::size_t i = 0; i < base.in_dim(); ++i) {
        for (std::size_t j = 0; j < r; ++j) ad.delta_v(i, j) = fv.u(i, j);
    }
    ad.delta_sigma.assign(r, 0.0);
    return ad;
}

}  // namespace

TEST_CASE("l1 mse basics") {
    const auto base = make_base(4, 3, 1);
    const auto ad = make_adapter(base, 2, 2);
    Batch batch;
    batch.kind = kasa::LossKind::mse;
    batch.inputs = oracle::random_matrix(3, 5, 3);
    batch.targets = kasa::forward(base, ad, batch.inputs);
    CHECK(kasa::loss_l1(base, ad, batch) == 0.0);

    Batch empty;
    empty.inputs = Matrix(3, 1);
    empty.targets = Matrix(4, 1);
    empty.inputs = Matrix(3, 5);  // mismatched target columns
    CHECK_THROWS(kasa::loss_l1(base, ad, empty));
}

TEST_CASE("l1 mse matches per-sample loop oracle") {
    const auto base = make_base(5, 4, 4);
    const auto ad = make_adapter(base, 2, 5);
    const Batch batch = make_batch(base, 6, 6);
    const Matrix pred = kasa::forward(base, ad, batch.inputs);
    double want = 0.0;
    for (std::size_t c = 0; c < 6; ++c) {
        for (std::size_t i = 0; i < 5; ++i) {
            const double e = pred(i, c) - batch.targets(i, c);
            want += e * e;
        }
    }
    want /= 6.0;
    CHECK(kasa::loss_l1(base, ad, batch) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("cross-entropy: uniform logits give ln c") {
    const Matrix w0(3, 4);  // zero base
    kasa::TruncatedBase base;
    base.w_world = w0;
    base.original_frobenius = 0.0;
    auto ad = kasa::init_kasa(base, 2, 16.0, 7);  // delta_u = 0 so logits stay 0
    Batch batch;
    batch.kind = kasa::LossKind::cross_entropy;
    batch.inputs = oracle::random_matrix(4, 5, 8);
    batch.labels = {0, 1, 2, 0, 1};
    CHECK(kasa::loss_l1(base, ad, batch) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("l2 equals materialized frobenius norm squared") {
    const auto base = make_base(6, 5, 9);
    const auto ad = make_adapter(base, 3, 10);
    const Matrix dw = kasa::raw_update(ad);
    const double want = oracle::naive_frobenius(dw) * oracle::naive_frobenius(dw);
    CHECK(kasa::loss_l2(ad) == doctest::Approx(want).epsilon(1e-12));

    auto dead = ad;
    for (double& s : dead.delta_sigma) s = 0.0;
    CHECK(kasa::loss_l2(dead) == 0.0);
}

TEST_CASE("eckart-young identity under semi-orthogonal factors") {
    const auto base = make_base(8, 6, 11, 0);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto ad = orthonormal_adapter(base, 3, 100 + seed);
        kasa::Rng rng(seed);
        double sum_sq = 0.0;
        for (double& s : ad.delta_sigma) {
            s = rng.normal();
            sum_sq += s * s;
        }
        CHECK(std::abs(kasa::loss_l2(ad) - sum_sq) <= 1e-9 * (1.0 + sum_sq));
    }
    // hand case: sigma = (0.5, -0.5) -> 0.5
    auto ad = orthonormal_adapter(base, 2, 200);
    ad.delta_sigma = {0.5, -0.5};
    CHECK(kasa::loss_l2(ad) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("l3 orthogonality penalty") {
    const auto base = make_base(6, 5, 12, 0);
    auto ortho = orthonormal_adapter(base, 2, 300);
    CHECK(kasa::loss_l3(ortho) < 1e-18);

    // r=1, single u column of norm 2, orthonormal v -> (4-1)^2 = 9
    kasa::KasaAdapter ad = orthonormal_adapter(base, 1, 301);
    for (std::size_t i = 0; i < ad.delta_u.rows(); ++i) ad.delta_u(i, 0) *= 2.0;
    CHECK(kasa::loss_l3(ad) == doctest::Approx(9.0).epsilon(1e-10));

    const auto seeded = make_adapter(base, 3, 13);
    const double du = oracle::naive_defect(seeded.delta_u);
    const double dv = oracle::naive_defect(seeded.delta_v);
    CHECK(kasa::loss_l3(seeded) == doctest::Approx(du * du + dv * dv).epsilon(1e-11));
}

TEST_CASE("total loss composition") {
    const auto base = make_base(5, 4, 14);
    const auto ad = make_adapter(base, 2, 15);
    const Batch batch = make_batch(base, 4, 16);

    const auto zero = kasa::total_loss(base, ad, batch, 0.0, 0.0);
    CHECK(zero.total == zero.l1_task);

    const auto full = kasa::total_loss(base, ad, batch, 1e-4, 1e-3);
    CHECK(full.total ==
          doctest::Approx(full.l1_task + 1e-4 * full.l2_sigma + 1e-3 * full.l3_orth)
              .epsilon(1e-12));
    CHECK(full.l2_sigma >= 0.0);
    CHECK(full.l3_orth >= 0.0);

    // doubling beta doubles (total - l1 - gamma*l3) exactly
    const auto twice = kasa::total_loss(base, ad, batch, 2e-4, 1e-3);
    const double part1 = full.total - full.l1_task - 1e-3 * full.l3_orth;
    const double part2 = twice.total - twice.l1_task - 1e-3 * twice.l3_orth;
    CHECK(part2 == doctest::Approx(2.0 * part1).epsilon(1e-12));

    CHECK_THROWS(kasa::total_loss(base, ad, batch, -1.0, 0.0));
}

TEST_CASE("fresh init loss decomposition") {
    const auto base = make_base(5, 4, 17);
    const auto ad = kasa::init_kasa(base, 1, 16.0, 18);  // r = 1
    CHECK(kasa::loss_l2(ad) == 0.0);
    // delta_u = 0 contributes ||-I_1||^2 = 1; delta_v defect is (|v|^2-1)^2
    double vnorm_sq = 0.0;
    for (std::size_t i = 0; i < ad.delta_v.rows(); ++i) {
        vnorm_sq += ad.delta_v(i, 0) * ad.delta_v(i, 0);
    }
    const double want = 1.0 + (vnorm_sq - 1.0) * (vnorm_sq - 1.0);
    CHECK(kasa::loss_l3(ad) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("gradient hand cases") {
    const auto base = make_base(6, 5, 19, 0);
    // beta=1, L2 only, orthonormal factors, sigma = 0.5 -> d sigma = 1.0
    auto ortho = orthonormal_adapter(base, 2, 400);
    ortho.delta_sigma = {0.5, 0.5};
    Batch batch = make_batch(base, 3, 20);
    batch.targets = kasa::forward(base, ortho, batch.inputs);  // kills L1 gradient
    const auto g = kasa::gradients(base, ortho, batch, 1.0, 0.0);
    CHECK(g.d_delta_sigma[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(g.d_delta_sigma[1] == doctest::Approx(1.0).epsilon(1e-9));

    // L3 gradient vanishes exactly on semi-orthogonal factors
    const auto g3 = kasa::gradients(base, ortho, batch, 0.0, 1.0);
    for (std::size_t i = 0; i < g3.d_delta_u.size(); ++i) {
        CHECK(std::abs(g3.d_delta_u.data()[i]) < 1e-12);
    }
    for (std::size_t i = 0; i < g3.d_delta_v.size(); ++i) {
        CHECK(std::abs(g3.d_delta_v.data()[i]) < 1e-12);
    }
}

TEST_CASE("finite differences are exact on quadratics and zero on constants") {
    const auto base = make_base(4, 3, 21);
    const auto ad = make_adapter(base, 2, 22);
    const Batch batch = make_batch(base, 3, 23);
    // MSE in one coordinate is quadratic; central differences are exact up
    // to rounding, so numeric and analytic agree far below the h^2 level.
    const auto analytic = kasa::gradients(base, ad, batch, 0.0, 0.0);
    const auto numeric = kasa::finite_difference(base, ad, batch, 0.0, 0.0, 1e-4);
    for (std::size_t i = 0; i < analytic.d_delta_u.size(); ++i) {
        CHECK(analytic.d_delta_u.data()[i] ==
              doctest::Approx(numeric.d_delta_u.data()[i]).epsilon(1e-7));
    }
    CHECK_THROWS(kasa::finite_difference(base, ad, batch, 0.0, 0.0, 0.0));
}

TEST_CASE("gradient check across ranks and coefficients") {
    const double coeffs[] = {0.0, 1e-4, 1e-1};
    std::uint64_t seed = 500;
    for (std::size_t r : {1u, 2u, 4u}) {
        for (double beta : coeffs) {
            for (double gamma : coeffs) {
                const auto base = make_base(12, 9, seed, 2);
                const auto ad = make_adapter(base, r, seed + 1);
                const Batch batch = make_batch(base, 5, seed + 2);
                const auto res = kasa::grad_check(base, ad, batch, beta, gamma);
                CAPTURE(r);
                CAPTURE(beta);
                CAPTURE(gamma);
                CHECK(res.max_rel_error <= 1e-6);
                seed += 3;
            }
        }
    }
}

TEST_CASE("gradient check with cross-entropy head") {
    const auto base = make_base(6, 5, 600);
    const auto ad = make_adapter(base, 3, 601);
    Batch batch;
    batch.kind = kasa::LossKind::cross_entropy;
    batch.inputs = oracle::random_matrix(5, 7, 602);
    batch.labels = {0, 1, 2, 3, 4, 5, 0};
    const auto res = kasa::grad_check(base, ad, batch, 1e-4, 1e-3);
    CHECK(res.max_rel_error <= 1e-6);
}
