#include "kasa/objective.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace kasa {

namespace {

void check_batch(const TruncatedBase& base, const Batch& batch) {
    if (batch.size() == 0) {
        throw std::invalid_argument("loss: empty batch");
    }
    if (batch.inputs.rows() != base.in_dim()) {
        throw std::invalid_argument("loss: input dimension mismatch");
    }
    if (batch.kind == LossKind::mse) {
        if (batch.targets.rows() != base.out_dim() ||
            batch.targets.cols() != batch.size()) {
            throw std::invalid_argument("loss: target shape mismatch");
        }
    } else {
        if (batch.labels.size() != batch.size()) {
            throw std::invalid_argument("loss: label count mismatch");
        }
        for (std::size_t c : batch.labels) {
            if (c >= base.out_dim()) {
                throw std::invalid_argument("loss: label out of range");
            }
        }
    }
}

// Per-column softmax with the usual max shift.
Matrix softmax_columns(const Matrix& logits) {
    Matrix p = logits;
    for (std::size_t c = 0; c < p.cols(); ++c) {
        double mx = p(0, c);
        for (std::size_t i = 1; i < p.rows(); ++i) mx = std::max(mx, p(i, c));
        double sum = 0.0;
        for (std::size_t i = 0; i < p.rows(); ++i) {
            p(i, c) = std::exp(p(i, c) - mx);
            sum += p(i, c);
        }
        for (std::size_t i = 0; i < p.rows(); ++i) p(i, c) /= sum;
    }
    return p;
}

double task_loss_from_predictions(const Matrix& pred, const Batch& batch) {
    const double b = static_cast<double>(batch.size());
    if (batch.kind == LossKind::mse) {
        double acc = 0.0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double e = pred.data()[i] - batch.targets.data()[i];
            acc += e * e;
        }
        return acc / b;
    }
    const Matrix p = softmax_columns(pred);
    double acc = 0.0;
    for (std::size_t c = 0; c < batch.size(); ++c) {
        acc -= std::log(std::max(p(batch.labels[c], c), 1e-300));
    }
    return acc / b;
}

// dL1/dPred
Matrix task_gradient_from_predictions(const Matrix& pred, const Batch& batch) {
    const double b = static_cast<double>(batch.size());
    if (batch.kind == LossKind::mse) {
        return scale(sub(pred, batch.targets), 2.0 / b);
    }
    Matrix g = softmax_columns(pred);
    for (std::size_t c = 0; c < batch.size(); ++c) {
        g(batch.labels[c], c) -= 1.0;
    }
    return scale(g, 1.0 / b);
}

Matrix gram(const Matrix& m) { return matmul(transpose(m), m); }

}  // namespace

double loss_l1(const TruncatedBase& base, const KasaAdapter& adapter, const Batch& batch) {
    check_batch(base, batch);
    return task_loss_from_predictions(forward(base, adapter, batch.inputs), batch);
}

double loss_l2(const KasaAdapter& adapter) {
    const double f = frobenius_norm(raw_update(adapter));
    return f * f;
}

double loss_l3(const KasaAdapter& adapter) {
    const double du = orthogonality_defect(adapter.delta_u);
    const double dv = orthogonality_defect(adapter.delta_v);
    return du * du + dv * dv;
}

LossBreakdown total_loss(const TruncatedBase& base, const KasaAdapter& adapter,
                         const Batch& batch, double beta, double gamma) {
    if (beta < 0.0 || gamma < 0.0) {
        throw std::invalid_argument("total_loss: beta and gamma must be nonnegative");
    }
    LossBreakdown out;
    out.beta = beta;
    out.gamma = gamma;
    out.l1_task = loss_l1(base, adapter, batch);
    out.l2_sigma = loss_l2(adapter);
    out.l3_orth = loss_l3(adapter);
    out.total = out.l1_task + beta * out.l2_sigma + gamma * out.l3_orth;
    return out;
}

Gradients gradients(const TruncatedBase& base, const KasaAdapter& adapter,
                    const Batch& batch, double beta, double gamma) {
    check_batch(base, batch);
    if (beta < 0.0 || gamma < 0.0) {
        throw std::invalid_argument("gradients: beta and gamma must be nonnegative");
    }
    const std::size_t r = adapter.rank_r;
    const double eta = adapter.eta;

    const Matrix pred = forward(base, adapter, batch.inputs);
    const Matrix g = task_gradient_from_predictions(pred, batch);  // n x b

    // Task path: pred = w_world x + eta * dU D dV^T x
    const Matrix xt_dv = matmul(transpose(batch.inputs), adapter.delta_v);  // b x r
    const Matrix g_xt_dv = matmul(g, xt_dv);                                // n x r
    const Matrix gt_du = matmul(transpose(g), adapter.delta_u);             // b x r
    const Matrix x_gt_du = matmul(batch.inputs, gt_du);                     // m x r

    Gradients out;
    out.d_delta_u = Matrix(adapter.delta_u.rows(), r);
    out.d_delta_v = Matrix(adapter.delta_v.rows(), r);
    out.d_delta_sigma.assign(r, 0.0);

    for (std::size_t i = 0; i < out.d_delta_u.rows(); ++i) {
        for (std::size_t j = 0; j < r; ++j) {
            out.d_delta_u(i, j) = eta * adapter.delta_sigma[j] * g_xt_dv(i, j);
        }
    }
    for (std::size_t i = 0; i < out.d_delta_v.rows(); ++i) {
        for (std::size_t j = 0; j < r; ++j) {
            out.d_delta_v(i, j) = eta * adapter.delta_sigma[j] * x_gt_du(i, j);
        }
    }
    for (std::size_t j = 0; j < r; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < batch.size(); ++c) {
            acc += gt_du(c, j) * xt_dv(c, j);
        }
        out.d_delta_sigma[j] = eta * acc;
    }

    // L2 = ||dU D dV^T||_F^2, differentiated exactly via the Gram matrices.
    if (beta > 0.0) {
        const Matrix gu = gram(adapter.delta_u);  // r x r
        const Matrix gv = gram(adapter.delta_v);  // r x r
        for (std::size_t i = 0; i < out.d_delta_u.rows(); ++i) {
            for (std::size_t j = 0; j < r; ++j) {
                double acc = 0.0;
                for (std::size_t l = 0; l < r; ++l) {
                    acc += adapter.delta_u(i, l) * adapter.delta_sigma[l] *
                           gv(l, j) * adapter.delta_sigma[j];
                }
                out.d_delta_u(i, j) += beta * 2.0 * acc;
            }
        }
        for (std::size_t i = 0; i < out.d_delta_v.rows(); ++i) {
            for (std::size_t j = 0; j < r; ++j) {
                double acc = 0.0;
                for (std::size_t l = 0; l < r; ++l) {
                    acc += adapter.delta_v(i, l) * adapter.delta_sigma[l] *
                           gu(l, j) * adapter.delta_sigma[j];
                }
                out.d_delta_v(i, j) += beta * 2.0 * acc;
            }
        }
        for (std::size_t j = 0; j < r; ++j) {
            double acc = 0.0;
            for (std::size_t l = 0; l < r; ++l) {
                acc += gu(j, l) * adapter.delta_sigma[l] * gv(l, j);
            }
            out.d_delta_sigma[j] += beta * 2.0 * acc;
        }
    }

    // L3: 4 dU (dU^T dU - I), same form for dV.
    if (gamma > 0.0) {
        Matrix pu = gram(adapter.delta_u);
        Matrix pv = gram(adapter.delta_v);
        for (std::size_t j = 0; j < r; ++j) {
            pu(j, j) -= 1.0;
            pv(j, j) -= 1.0;
        }
        const Matrix du_term = matmul(adapter.delta_u, pu);
        const Matrix dv_term = matmul(adapter.delta_v, pv);
        for (std::size_t i = 0; i < out.d_delta_u.size(); ++i) {
            out.d_delta_u.data()[i] += gamma * 4.0 * du_term.data()[i];
        }
        for (std::size_t i = 0; i < out.d_delta_v.size(); ++i) {
            out.d_delta_v.data()[i] += gamma * 4.0 * dv_term.data()[i];
        }
    }
    return out;
}

namespace {

// Extended-precision objective for the finite-difference oracle, written as
// plain loops independent of the library kernels. Central differences lose
// about eps * |loss| / h to cancellation, which at double precision is too
// coarse for a 1e-6 relative check on small-magnitude coordinates; the
// long double evaluation pushes that noise three decades down.
long double total_loss_ld(const TruncatedBase& base, const KasaAdapter& ad,
                          const Batch& batch, double beta, double gamma) {
    const std::size_t n = base.out_dim();
    const std::size_t m = base.in_dim();
    const std::size_t b = batch.size();
    const std::size_t r = ad.rank_r;
    const long double eta = ad.eta;

    std::vector<long double> vtx(r * b, 0.0L);  // delta_v^T x
    for (std::size_t j = 0; j < r; ++j) {
        for (std::size_t c = 0; c < b; ++c) {
            long double acc = 0.0L;
            for (std::size_t l = 0; l < m; ++l) {
                acc += static_cast<long double>(ad.delta_v(l, j)) * batch.inputs(l, c);
            }
            vtx[j * b + c] = acc;
        }
    }

    long double l1 = 0.0L;
    for (std::size_t c = 0; c < b; ++c) {
        std::vector<long double> pred(n, 0.0L);
        for (std::size_t i = 0; i < n; ++i) {
            long double acc = 0.0L;
            for (std::size_t l = 0; l < m; ++l) {
                acc += static_cast<long double>(base.w_world(i, l)) * batch.inputs(l, c);
            }
            for (std::size_t j = 0; j < r; ++j) {
                acc += eta * ad.delta_u(i, j) * static_cast<long double>(ad.delta_sigma[j]) *
                       vtx[j * b + c];
            }
            pred[i] = acc;
        }
        if (batch.kind == LossKind::mse) {
            for (std::size_t i = 0; i < n; ++i) {
                const long double e = pred[i] - batch.targets(i, c);
                l1 += e * e;
            }
        } else {
            long double mx = pred[0];
            for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, pred[i]);
            long double sum = 0.0L;
            for (std::size_t i = 0; i < n; ++i) sum += std::exp(pred[i] - mx);
            l1 += std::log(sum) - (pred[batch.labels[c]] - mx);
        }
    }
    l1 /= static_cast<long double>(b);

    long double l2 = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t l = 0; l < m; ++l) {
            long double acc = 0.0L;
            for (std::size_t j = 0; j < r; ++j) {
                acc += static_cast<long double>(ad.delta_u(i, j)) * ad.delta_sigma[j] *
                       ad.delta_v(l, j);
            }
            l2 += acc * acc;
        }
    }

    long double l3 = 0.0L;
    for (const Matrix* f : {&ad.delta_u, &ad.delta_v}) {
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < r; ++j) {
                long double dot = 0.0L;
                for (std::size_t l = 0; l < f->rows(); ++l) {
                    dot += static_cast<long double>((*f)(l, i)) * (*f)(l, j);
                }
                if (i == j) dot -= 1.0L;
                l3 += dot * dot;
            }
        }
    }
    return l1 + static_cast<long double>(beta) * l2 + static_cast<long double>(gamma) * l3;
}

}  // namespace

Gradients finite_difference(const TruncatedBase& base, const KasaAdapter& adapter,
                            const Batch& batch, double beta, double gamma, double h) {
    if (h <= 0.0) throw std::invalid_argument("finite_difference: h must be positive");
    check_batch(base, batch);
    if (beta < 0.0 || gamma < 0.0) {
        throw std::invalid_argument("finite_difference: beta and gamma must be nonnegative");
    }
    KasaAdapter probe = adapter;
    auto central = [&](double& coord) {
        const double saved = coord;
        coord = saved + h;
        const long double hi = total_loss_ld(base, probe, batch, beta, gamma);
        coord = saved - h;
        const long double lo = total_loss_ld(base, probe, batch, beta, gamma);
        coord = saved;
        return static_cast<double>((hi - lo) / (2.0L * static_cast<long double>(h)));
    };

    Gradients out;
    out.d_delta_u = Matrix(adapter.delta_u.rows(), adapter.rank_r);
    out.d_delta_v = Matrix(adapter.delta_v.rows(), adapter.rank_r);
    out.d_delta_sigma.assign(adapter.rank_r, 0.0);
    for (std::size_t i = 0; i < probe.delta_u.size(); ++i) {
        out.d_delta_u.data()[i] = central(probe.delta_u.data()[i]);
    }
    for (std::size_t j = 0; j < adapter.rank_r; ++j) {
        out.d_delta_sigma[j] = central(probe.delta_sigma[j]);
    }
    for (std::size_t i = 0; i < probe.delta_v.size(); ++i) {
        out.d_delta_v.data()[i] = central(probe.delta_v.data()[i]);
    }
    return out;
}

GradCheckResult grad_check(const TruncatedBase& base, const KasaAdapter& adapter,
                           const Batch& batch, double beta, double gamma,
                           double h, double abs_floor) {
    const Gradients analytic = gradients(base, adapter, batch, beta, gamma);
    const Gradients numeric = finite_difference(base, adapter, batch, beta, gamma, h);

    GradCheckResult res;
    std::size_t index = 0;
    auto visit = [&](double a, double n) {
        double err;
        if (std::abs(a) < abs_floor && std::abs(n) < abs_floor) {
            err = std::abs(a - n);
        } else {
            err = std::abs(a - n) / std::max(std::abs(a), std::abs(n));
        }
        if (err > res.max_rel_error) {
            res.max_rel_error = err;
            res.worst_coordinate = index;
        }
        ++index;
    };
    for (std::size_t i = 0; i < analytic.d_delta_u.size(); ++i) {
        visit(analytic.d_delta_u.data()[i], numeric.d_delta_u.data()[i]);
    }
    for (std::size_t j = 0; j < analytic.d_delta_sigma.size(); ++j) {
        visit(analytic.d_delta_sigma[j], numeric.d_delta_sigma[j]);
    }
    for (std::size_t i = 0; i < analytic.d_delta_v.size(); ++i) {
        visit(analytic.d_delta_v.data()[i], numeric.d_delta_v.data()[i]);
    }
    return res;
}

}  // namespace kasa
