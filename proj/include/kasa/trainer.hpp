#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kasa/adapter.hpp"
#include "kasa/baselines.hpp"
#include "kasa/objective.hpp"

namespace kasa {

enum class Optimizer { sgd, adam_decoupled_wd };

struct TrainConfig {
    double learning_rate = 2e-4;
    std::size_t steps = 500;
    std::size_t batch_size = 0;  // 0 or >= dataset size means full batch
    double beta = 1e-4;
    double gamma = 1e-3;
    Optimizer optimizer = Optimizer::adam_decoupled_wd;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;
    bool average_aux = false;
    bool linear_lr_schedule = false;

    void validate() const;
};

struct RunReport {
    std::vector<LossBreakdown> trace;
    double final_train_metric = 0.0;
    double final_test_metric = 0.0;
    double wall_seconds = 0.0;
    std::size_t parameter_count = 0;
    std::vector<double> final_delta_sigma;  // empty for baselines
};

struct Dataset {
    Batch train;
    Batch test;
};

/// Adam with decoupled weight decay for one parameter tensor. Bias-corrected
/// moments, beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;

    void init(std::size_t size) {
        m.assign(size, 0.0);
        v.assign(size, 0.0);
    }
};

void step_sgd(std::span<double> params, std::span<const double> grads, double lr,
              double weight_decay);
void step_adam_decoupled_wd(std::span<double> params, std::span<const double> grads,
                            AdamState& state, std::size_t t, double lr,
                            double weight_decay);

/// Minimize the full objective over the adapter parameters. The base is
/// never touched; the trace records one LossBreakdown per step (evaluated
/// before the update). Throws on non-finite loss, naming the step.
RunReport train_kasa(const TruncatedBase& base, KasaAdapter& adapter,
                     const Dataset& dataset, const TrainConfig& config);

/// Same loop for the two-factor baselines; only the task loss is active.
RunReport train_lowrank(LowRankAdapter& adapter, const Dataset& dataset,
                        const TrainConfig& config);

// Trace format: header line "step l1 l2 l3 total", one record per step,
// then "summary train_metric test_metric param_count". 17 significant
// digits, stable field order.
void save_trace(const RunReport& report, const std::string& path);

}  // namespace kasa
