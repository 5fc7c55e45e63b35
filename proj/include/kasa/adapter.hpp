#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kasa/matrix.hpp"

namespace kasa {

/// Base matrix with its k smallest singular directions removed. Immutable
/// after construction; the dropped spectrum is kept for bookkeeping.
struct TruncatedBase {
    Matrix w_world;
    std::size_t truncation_rank_k = 0;
    std::vector<double> dropped_sigma;
    double original_frobenius = 0.0;

    std::size_t out_dim() const { return w_world.rows(); }
    std::size_t in_dim() const { return w_world.cols(); }
};

/// SVD-form adapter: update = eta * delta_u * diag(delta_sigma) * delta_v^T
/// with learnable singular values delta_sigma.
struct KasaAdapter {
    Matrix delta_u;                   // n x r
    std::vector<double> delta_sigma;  // r
    Matrix delta_v;                   // m x r
    std::size_t rank_r = 0;
    double alpha = 0.0;
    double eta = 0.0;  // alpha / rank_r

    std::size_t parameter_count() const {
        return delta_u.size() + delta_sigma.size() + delta_v.size();
    }
};

/// Drop the k smallest singular triplets of w0. Rejects k >= min(n, m).
TruncatedBase truncate_base(const Matrix& w0, std::size_t k);

/// delta_u = 0, delta_v and delta_sigma ~ N(0, init_std^2), so the adapted
/// model starts exactly at w_world. Deterministic per seed.
KasaAdapter init_kasa(const TruncatedBase& base, std::size_t r, double alpha,
                      std::uint64_t seed, double init_std = 0.02);

/// y = w_world * x + eta * delta_u * diag(delta_sigma) * (delta_v^T * x)
Matrix forward(const TruncatedBase& base, const KasaAdapter& adapter, const Matrix& x);

/// w_world + eta * delta_u * diag(delta_sigma) * delta_v^T
Matrix merge(const TruncatedBase& base, const KasaAdapter& adapter);

/// The adapter update materialized without eta: delta_u * diag * delta_v^T.
Matrix raw_update(const KasaAdapter& adapter);

struct SpectralNormReport {
    double value = 0.0;  // eta * max_j |delta_sigma_j|
    double defect_u = 0.0;
    double defect_v = 0.0;
};

/// Spectral norm of the update under the semi-orthogonality assumption; the
/// factor defects are reported alongside rather than enforced.
SpectralNormReport spectral_norm_of_update(const KasaAdapter& adapter);

// Checkpoint: text header "KASA1 n m r k alpha" then binary delta_u,
// delta_v, delta_sigma. Round-trips bitwise.
void save_checkpoint(const KasaAdapter& adapter, std::size_t truncation_rank_k,
                     const std::string& path);
KasaAdapter load_checkpoint(const std::string& path, std::size_t* truncation_rank_k = nullptr);

}  // namespace kasa
