#include "kasa/baselines.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "kasa/rng.hpp"
#include "kasa/svd.hpp"

namespace kasa {

namespace {

void check_rank(const Matrix& w0, std::size_t r) {
    if (r == 0 || r > std::min(w0.rows(), w0.cols())) {
        throw std::invalid_argument("low-rank init: rank r infeasible for matrix");
    }
}

// a = U_sel * sqrt(S_sel), b = sqrt(S_sel) * V_sel^T over singular indices
// [first, first + r).
LowRankAdapter from_spectrum_slice(const Matrix& w0, const SvdFactors& f,
                                   std::size_t first, std::size_t r,
                                   AdapterFlavor flavor) {
    const std::size_t n = w0.rows(), m = w0.cols();
    LowRankAdapter ad;
    ad.flavor = flavor;
    ad.scaling = 1.0;
    ad.a = Matrix(n, r);
    ad.b = Matrix(r, m);
    for (std::size_t j = 0; j < r; ++j) {
        const double root = std::sqrt(f.sigma[first + j]);
        for (std::size_t i = 0; i < n; ++i) ad.a(i, j) = f.u(i, first + j) * root;
        for (std::size_t i = 0; i < m; ++i) ad.b(j, i) = f.v(i, first + j) * root;
    }
    ad.frozen_base = sub(w0, matmul(ad.a, ad.b));
    return ad;
}

}  // namespace

const char* flavor_name(AdapterFlavor flavor) {
    switch (flavor) {
        case AdapterFlavor::lora: return "lora";
        case AdapterFlavor::pissa: return "pissa";
        case AdapterFlavor::milora: return "milora";
    }
    return "?";
}

LowRankAdapter init_lora(const Matrix& w0, std::size_t r, double alpha,
                         std::uint64_t seed, double init_std) {
    check_rank(w0, r);
    if (alpha <= 0.0) throw std::invalid_argument("init_lora: alpha must be positive");
    LowRankAdapter ad;
    ad.flavor = AdapterFlavor::lora;
    ad.scaling = alpha / static_cast<double>(r);
    ad.a = Matrix(w0.rows(), r);
    ad.b = Matrix(r, w0.cols());
    ad.frozen_base = w0;
    Rng rng(seed);
    for (double& v : ad.a.data()) v = rng.normal(0.0, init_std);
    return ad;
}

LowRankAdapter init_pissa(const Matrix& w0, std::size_t r, std::uint64_t /*seed*/) {
    check_rank(w0, r);
    return from_spectrum_slice(w0, svd(w0), 0, r, AdapterFlavor::pissa);
}

LowRankAdapter init_milora(const Matrix& w0, std::size_t r, std::uint64_t /*seed*/) {
    check_rank(w0, r);
    const std::size_t p = std::min(w0.rows(), w0.cols());
    return from_spectrum_slice(w0, svd(w0), p - r, r, AdapterFlavor::milora);
}

Matrix forward(const LowRankAdapter& adapter, const Matrix& x) {
    if (x.rows() != adapter.frozen_base.cols()) {
        throw std::invalid_argument("forward: input row count must equal base columns");
    }
    return add(matmul(adapter.frozen_base, x),
               scale(matmul(adapter.a, matmul(adapter.b, x)), adapter.scaling));
}

Matrix merge(const LowRankAdapter& adapter) {
    return add(adapter.frozen_base, scale(matmul(adapter.a, adapter.b), adapter.scaling));
}

void save_checkpoint(const LowRankAdapter& adapter, const std::string& path) {
    static const char* magics[] = {"LORA1", "PISA1", "MILO1"};
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    char header[128];
    std::snprintf(header, sizeof header, "%s %zu %zu %zu %.17g\n",
                  magics[static_cast<int>(adapter.flavor)], adapter.a.rows(),
                  adapter.b.cols(), adapter.rank(), adapter.scaling);
    f << header;
    save_binary(adapter.a, f);
    save_binary(adapter.b, f);
    save_binary(adapter.frozen_base, f);
}

LowRankAdapter load_checkpoint_lowrank(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::string line;
    std::getline(f, line);
    std::istringstream hs(line);
    std::string magic;
    std::size_t n = 0, m = 0, r = 0;
    double scaling = 0.0;
    if (!(hs >> magic >> n >> m >> r >> scaling)) {
        throw std::runtime_error("checkpoint load: bad header in " + path);
    }
    LowRankAdapter ad;
    if (magic == "LORA1") {
        ad.flavor = AdapterFlavor::lora;
    } else if (magic == "PISA1") {
        ad.flavor = AdapterFlavor::pissa;
    } else if (magic == "MILO1") {
        ad.flavor = AdapterFlavor::milora;
    } else {
        throw std::runtime_error("checkpoint load: unknown magic " + magic);
    }
    ad.scaling = scaling;
    ad.a = load_binary(f);
    ad.b = load_binary(f);
    ad.frozen_base = load_binary(f);
    if (ad.a.rows() != n || ad.b.cols() != m || ad.a.cols() != r || ad.b.rows() != r) {
        throw std::runtime_error("checkpoint load: dimension mismatch");
    }
    return ad;
}

}  // namespace kasa
