#include "kasa/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <stdexcept>

#include "kasa/rng.hpp"

namespace kasa {

void TrainConfig::validate() const {
    if (learning_rate < 0.0) throw std::invalid_argument("config: negative learning rate");
    if (steps < 1) throw std::invalid_argument("config: steps must be >= 1");
    if (beta < 0.0 || gamma < 0.0) throw std::invalid_argument("config: negative beta/gamma");
    if (weight_decay < 0.0) throw std::invalid_argument("config: negative weight decay");
}

void step_sgd(std::span<double> params, std::span<const double> grads, double lr,
              double weight_decay) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        params[i] -= lr * (grads[i] + weight_decay * params[i]);
    }
}

void step_adam_decoupled_wd(std::span<double> params, std::span<const double> grads,
                            AdamState& state, std::size_t t, double lr,
                            double weight_decay) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * params[i]);
    }
}

namespace {

struct ParamTensor {
    double* data;
    std::size_t size;
    bool decay;  // weight decay applies to factor matrices, never to sigma
};

Batch select_columns(const Batch& full, const std::vector<std::size_t>& idx) {
    Batch out;
    out.kind = full.kind;
    out.inputs = Matrix(full.inputs.rows(), idx.size());
    for (std::size_t c = 0; c < idx.size(); ++c) {
        for (std::size_t i = 0; i < full.inputs.rows(); ++i) {
            out.inputs(i, c) = full.inputs(i, idx[c]);
        }
    }
    if (full.kind == LossKind::mse) {
        out.targets = Matrix(full.targets.rows(), idx.size());
        for (std::size_t c = 0; c < idx.size(); ++c) {
            for (std::size_t i = 0; i < full.targets.rows(); ++i) {
                out.targets(i, c) = full.targets(i, idx[c]);
            }
        }
    } else {
        out.labels.resize(idx.size());
        for (std::size_t c = 0; c < idx.size(); ++c) out.labels[c] = full.labels[idx[c]];
    }
    return out;
}

// Generic loop over any model exposing parameter tensors and an evaluate
// callback producing the loss breakdown plus per-tensor gradients.
RunReport train_loop(
    std::vector<ParamTensor> params, const Dataset& dataset, const TrainConfig& config,
    const std::function<LossBreakdown(const Batch&, std::vector<std::vector<double>>&)>& evaluate,
    const std::function<double(const Batch&)>& metric) {
    config.validate();
    const auto start = std::chrono::steady_clock::now();

    std::vector<AdamState> states(params.size());
    for (std::size_t k = 0; k < params.size(); ++k) states[k].init(params[k].size);

    const std::size_t n_train = dataset.train.size();
    const bool full_batch = config.batch_size == 0 || config.batch_size >= n_train;
    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    std::size_t cursor = n_train;  // forces an initial shuffle

    RunReport report;
    report.trace.reserve(config.steps);
    for (ParamTensor& p : params) report.parameter_count += p.size;

    std::vector<std::vector<double>> grads(params.size());
    for (std::size_t step = 0; step < config.steps; ++step) {
        Batch minibatch;
        const Batch* batch = &dataset.train;
        if (!full_batch) {
            if (cursor + config.batch_size > n_train) {
                for (std::size_t i = n_train; i > 1; --i) {
                    std::swap(order[i - 1], order[shuffle_rng.below(i)]);
                }
                cursor = 0;
            }
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                                         order.begin() + static_cast<std::ptrdiff_t>(cursor + config.batch_size));
            cursor += config.batch_size;
            minibatch = select_columns(dataset.train, idx);
            batch = &minibatch;
        }

        const LossBreakdown loss = evaluate(*batch, grads);
        if (!std::isfinite(loss.total)) {
            throw std::runtime_error("train: non-finite loss at step " + std::to_string(step));
        }
        report.trace.push_back(loss);

        double lr = config.learning_rate;
        if (config.linear_lr_schedule) {
            lr *= 1.0 - static_cast<double>(step) / static_cast<double>(config.steps);
        }
        for (std::size_t k = 0; k < params.size(); ++k) {
            const double wd = params[k].decay ? config.weight_decay : 0.0;
            std::span<double> p(params[k].data, params[k].size);
            std::span<const double> g(grads[k].data(), grads[k].size());
            if (config.optimizer == Optimizer::sgd) {
                step_sgd(p, g, lr, wd);
            } else {
                step_adam_decoupled_wd(p, g, states[k], step + 1, lr, wd);
            }
        }
    }

    report.final_train_metric = metric(dataset.train);
    report.final_test_metric = metric(dataset.test);
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

}  // namespace

RunReport train_kasa(const TruncatedBase& base, KasaAdapter& adapter,
                     const Dataset& dataset, const TrainConfig& config) {
    // average_aux divides the auxiliary losses by the number of sigma
    // parameter groups; a single adapter has exactly one group.
    constexpr double sigma_groups = 1.0;
    const double aux_div = config.average_aux ? sigma_groups : 1.0;
    const double beta = config.beta / aux_div;
    const double gamma = config.gamma / aux_div;

    std::vector<ParamTensor> params = {
        {adapter.delta_u.data().data(), adapter.delta_u.size(), true},
        {adapter.delta_sigma.data(), adapter.delta_sigma.size(), false},
        {adapter.delta_v.data().data(), adapter.delta_v.size(), true},
    };
    auto evaluate = [&](const Batch& batch, std::vector<std::vector<double>>& grads) {
        const LossBreakdown loss = total_loss(base, adapter, batch, beta, gamma);
        const Gradients g = gradients(base, adapter, batch, beta, gamma);
        grads[0].assign(g.d_delta_u.data().begin(), g.d_delta_u.data().end());
        grads[1] = g.d_delta_sigma;
        grads[2].assign(g.d_delta_v.data().begin(), g.d_delta_v.data().end());
        return loss;
    };
    auto metric = [&](const Batch& batch) { return loss_l1(base, adapter, batch); };

    RunReport report = train_loop(std::move(params), dataset, config, evaluate, metric);
    report.final_delta_sigma = adapter.delta_sigma;
    return report;
}

RunReport train_lowrank(LowRankAdapter& adapter, const Dataset& dataset,
                        const TrainConfig& config) {
    std::vector<ParamTensor> params = {
        {adapter.a.data().data(), adapter.a.size(), true},
        {adapter.b.data().data(), adapter.b.size(), true},
    };
    auto task_loss = [&](const Batch& batch) {
        const Matrix pred = forward(adapter, batch.inputs);
        const double b = static_cast<double>(batch.size());
        if (batch.kind == LossKind::mse) {
            double acc = 0.0;
            for (std::size_t i = 0; i < pred.size(); ++i) {
                const double e = pred.data()[i] - batch.targets.data()[i];
                acc += e * e;
            }
            return acc / b;
        }
        double acc = 0.0;
        for (std::size_t c = 0; c < batch.size(); ++c) {
            double mx = pred(0, c);
            for (std::size_t i = 1; i < pred.rows(); ++i) mx = std::max(mx, pred(i, c));
            double sum = 0.0;
            for (std::size_t i = 0; i < pred.rows(); ++i) sum += std::exp(pred(i, c) - mx);
            acc += std::log(sum) - (pred(batch.labels[c], c) - mx);
        }
        return acc / b;
    };
    auto evaluate = [&](const Batch& batch, std::vector<std::vector<double>>& grads) {
        const Matrix pred = forward(adapter, batch.inputs);
        const double bsz = static_cast<double>(batch.size());
        Matrix g(pred.rows(), pred.cols());
        if (batch.kind == LossKind::mse) {
            g = scale(sub(pred, batch.targets), 2.0 / bsz);
        } else {
            g = pred;
            for (std::size_t c = 0; c < g.cols(); ++c) {
                double mx = g(0, c);
                for (std::size_t i = 1; i < g.rows(); ++i) mx = std::max(mx, g(i, c));
                double sum = 0.0;
                for (std::size_t i = 0; i < g.rows(); ++i) {
                    g(i, c) = std::exp(g(i, c) - mx);
                    sum += g(i, c);
                }
                for (std::size_t i = 0; i < g.rows(); ++i) g(i, c) /= sum;
                g(batch.labels[c], c) -= 1.0;
            }
            g = scale(g, 1.0 / bsz);
        }
        const Matrix bx = matmul(adapter.b, batch.inputs);  // r x bsz
        const Matrix da = scale(matmul(g, transpose(bx)), adapter.scaling);
        const Matrix db = scale(matmul(transpose(adapter.a), matmul(g, transpose(batch.inputs))),
                                adapter.scaling);
        grads[0].assign(da.data().begin(), da.data().end());
        grads[1].assign(db.data().begin(), db.data().end());
        LossBreakdown loss;
        loss.l1_task = task_loss(batch);
        loss.total = loss.l1_task;
        return loss;
    };
    return train_loop(std::move(params), dataset, config, evaluate, task_loss);
}

void save_trace(const RunReport& report, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "step l1 l2 l3 total\n";
    char buf[256];
    for (std::size_t i = 0; i < report.trace.size(); ++i) {
        const LossBreakdown& l = report.trace[i];
        std::snprintf(buf, sizeof buf, "%zu %.17g %.17g %.17g %.17g\n", i, l.l1_task,
                      l.l2_sigma, l.l3_orth, l.total);
        f << buf;
    }
    std::snprintf(buf, sizeof buf, "summary %.17g %.17g %zu\n", report.final_train_metric,
                  report.final_test_metric, report.parameter_count);
    f << buf;
}

}  // namespace kasa
