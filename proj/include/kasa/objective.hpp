#pragma once

#include <vector>

#include "kasa/adapter.hpp"
#include "kasa/matrix.hpp"

namespace kasa {

enum class LossKind { mse, cross_entropy };

/// Mini-batch with samples as columns. For regression, targets is n x b.
/// For classification, labels holds one class index per column and targets
/// is unused.
struct Batch {
    Matrix inputs;   // m x b
    Matrix targets;  // n x b (regression)
    std::vector<std::size_t> labels;  // b (classification)
    LossKind kind = LossKind::mse;

    std::size_t size() const { return inputs.cols(); }
};

struct LossBreakdown {
    double l1_task = 0.0;
    double l2_sigma = 0.0;
    double l3_orth = 0.0;
    double total = 0.0;
    double beta = 0.0;
    double gamma = 0.0;
};

struct Gradients {
    Matrix d_delta_u;                   // n x r
    std::vector<double> d_delta_sigma;  // r
    Matrix d_delta_v;                   // m x r
};

/// Task loss on predictions of the adapted model. MSE is the batch mean of
/// the squared error summed over output dimensions; cross-entropy is the
/// batch mean negative log-softmax of the target class.
double loss_l1(const TruncatedBase& base, const KasaAdapter& adapter, const Batch& batch);

/// ||delta_u * diag(delta_sigma) * delta_v^T||_F^2, materialized (eta
/// excluded). Equals sum of delta_sigma^2 only under semi-orthogonality.
double loss_l2(const KasaAdapter& adapter);

/// ||dU^T dU - I_r||_F^2 + ||dV^T dV - I_r||_F^2
double loss_l3(const KasaAdapter& adapter);

LossBreakdown total_loss(const TruncatedBase& base, const KasaAdapter& adapter,
                         const Batch& batch, double beta, double gamma);

/// Analytic gradients of total_loss with respect to every adapter
/// parameter, including the eta factor on the task path and the full L2
/// dependence on delta_u / delta_v.
Gradients gradients(const TruncatedBase& base, const KasaAdapter& adapter,
                    const Batch& batch, double beta, double gamma);

/// Central-difference oracle for gradients(), O(h^2) accurate.
Gradients finite_difference(const TruncatedBase& base, const KasaAdapter& adapter,
                            const Batch& batch, double beta, double gamma, double h);

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_coordinate = 0;
    bool ok(double tol) const { return max_rel_error <= tol; }
};

/// Compare analytic vs central-difference gradients. Coordinates where both
/// magnitudes fall below abs_floor are compared absolutely.
GradCheckResult grad_check(const TruncatedBase& base, const KasaAdapter& adapter,
                           const Batch& batch, double beta, double gamma,
                           double h = 1e-5, double abs_floor = 1e-8);

}  // namespace kasa
