#include "kasa/adapter.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "kasa/rng.hpp"
#include "kasa/svd.hpp"

namespace kasa {

TruncatedBase truncate_base(const Matrix& w0, std::size_t k) {
    const std::size_t p = std::min(w0.rows(), w0.cols());
    if (k >= p) {
        throw std::invalid_argument("truncate_base: k must be below min(n, m)");
    }
    SvdFactors f = svd(w0);
    TruncatedBase base;
    base.truncation_rank_k = k;
    base.original_frobenius = frobenius_norm(w0);
    base.dropped_sigma.assign(f.sigma.begin() + static_cast<std::ptrdiff_t>(p - k),
                              f.sigma.end());
    for (std::size_t j = p - k; j < p; ++j) f.sigma[j] = 0.0;
    base.w_world = reconstruct(f);
    return base;
}

KasaAdapter init_kasa(const TruncatedBase& base, std::size_t r, double alpha,
                      std::uint64_t seed, double init_std) {
    const std::size_t n = base.out_dim(), m = base.in_dim();
    const std::size_t p = std::min(n, m);
    if (r == 0 || r > p - base.truncation_rank_k) {
        throw std::invalid_argument("init_kasa: rank r infeasible for truncated base");
    }
    if (alpha <= 0.0) {
        throw std::invalid_argument("init_kasa: alpha must be positive");
    }
    KasaAdapter a;
    a.rank_r = r;
    a.alpha = alpha;
    a.eta = alpha / static_cast<double>(r);
    a.delta_u = Matrix(n, r);
    a.delta_v = Matrix(m, r);
    a.delta_sigma.assign(r, 0.0);
    Rng rng(seed);
    for (double& v : a.delta_v.data()) v = rng.normal(0.0, init_std);
    for (double& s : a.delta_sigma) s = rng.normal(0.0, init_std);
    return a;
}

Matrix forward(const TruncatedBase& base, const KasaAdapter& adapter, const Matrix& x) {
    if (x.rows() != base.in_dim()) {
        throw std::invalid_argument("forward: input row count must equal base columns");
    }
    Matrix vtx = matmul(transpose(adapter.delta_v), x);  // r x b
    for (std::size_t j = 0; j < adapter.rank_r; ++j) {
        for (std::size_t c = 0; c < vtx.cols(); ++c) {
            vtx(j, c) *= adapter.delta_sigma[j];
        }
    }
    return add(matmul(base.w_world, x), scale(matmul(adapter.delta_u, vtx), adapter.eta));
}

Matrix raw_update(const KasaAdapter& adapter) {
    Matrix scaled = adapter.delta_u;
    for (std::size_t i = 0; i < scaled.rows(); ++i) {
        for (std::size_t j = 0; j < scaled.cols(); ++j) {
            scaled(i, j) *= adapter.delta_sigma[j];
        }
    }
    return matmul(scaled, transpose(adapter.delta_v));
}

Matrix merge(const TruncatedBase& base, const KasaAdapter& adapter) {
    if (adapter.delta_u.rows() != base.out_dim() ||
        adapter.delta_v.rows() != base.in_dim()) {
        throw std::invalid_argument("merge: adapter/base dimension mismatch");
    }
    return add(base.w_world, scale(raw_update(adapter), adapter.eta));
}

SpectralNormReport spectral_norm_of_update(const KasaAdapter& adapter) {
    SpectralNormReport rep;
    rep.defect_u = orthogonality_defect(adapter.delta_u);
    rep.defect_v = orthogonality_defect(adapter.delta_v);
    double best = 0.0;
    for (double s : adapter.delta_sigma) best = std::max(best, std::abs(s));
    rep.value = adapter.eta * best;
    return rep;
}

void save_checkpoint(const KasaAdapter& adapter, std::size_t truncation_rank_k,
                     const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    char header[128];
    std::snprintf(header, sizeof header, "KASA1 %zu %zu %zu %zu %.17g\n",
                  adapter.delta_u.rows(), adapter.delta_v.rows(), adapter.rank_r,
                  truncation_rank_k, adapter.alpha);
    f << header;
    save_binary(adapter.delta_u, f);
    save_binary(adapter.delta_v, f);
    const std::uint64_t count = adapter.delta_sigma.size();
    f.write(reinterpret_cast<const char*>(&count), sizeof count);
    f.write(reinterpret_cast<const char*>(adapter.delta_sigma.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
}

KasaAdapter load_checkpoint(const std::string& path, std::size_t* truncation_rank_k) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::string line;
    std::getline(f, line);
    std::istringstream hs(line);
    std::string magic;
    std::size_t n = 0, m = 0, r = 0, k = 0;
    double alpha = 0.0;
    if (!(hs >> magic >> n >> m >> r >> k >> alpha) || magic != "KASA1") {
        throw std::runtime_error("checkpoint load: bad header in " + path);
    }
    KasaAdapter a;
    a.rank_r = r;
    a.alpha = alpha;
    a.eta = alpha / static_cast<double>(r);
    a.delta_u = load_binary(f);
    a.delta_v = load_binary(f);
    std::uint64_t count = 0;
    f.read(reinterpret_cast<char*>(&count), sizeof count);
    if (!f || count != r) throw std::runtime_error("checkpoint load: bad sigma count");
    a.delta_sigma.assign(count, 0.0);
    f.read(reinterpret_cast<char*>(a.delta_sigma.data()),
           static_cast<std::streamsize>(count * sizeof(double)));
    if (!f) throw std::runtime_error("checkpoint load: truncated file");
    if (a.delta_u.rows() != n || a.delta_v.rows() != m ||
        a.delta_u.cols() != r || a.delta_v.cols() != r) {
        throw std::runtime_error("checkpoint load: dimension mismatch");
    }
    if (truncation_rank_k) *truncation_rank_k = k;
    return a;
}

}  // namespace kasa
