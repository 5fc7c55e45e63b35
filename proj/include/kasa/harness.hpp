#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kasa/trainer.hpp"

namespace kasa {

/// Teacher-student regression task with noise planted in the smallest
/// singular directions of the base, so truncation has a ground-truth
/// correct answer: w0 = W_signal + W_planted, w_task = W_signal + a
/// low-rank delta inside W_signal's leading directions.
struct SynthTask {
    Matrix w0;
    Matrix w_task;
    Dataset data;
    std::size_t planted_noise_rank = 0;
    std::size_t task_delta_rank = 0;
    double noise_scale = 0.0;
    std::uint64_t seed = 0;
};

SynthTask make_task(std::size_t n, std::size_t m, std::size_t planted_noise_rank,
                    std::size_t task_delta_rank, double noise_scale,
                    std::size_t samples, std::uint64_t seed);

/// Test MSE of the unconstrained least-squares solution W = Y X^T (X X^T)^-1
/// fit on the training split; the attainable floor used as the reference in
/// reports. Solved by Gaussian elimination, independent of the SVD path.
double least_squares_floor(const SynthTask& task);

enum class Method { kasa, lora, pissa, milora };
const char* method_name(Method m);
Method method_from_name(const std::string& name);

struct HarnessConfig {
    TrainConfig train;
    double alpha = 16.0;
    double init_std = 0.02;

    HarnessConfig() {
        // Desk-scale defaults; Adam needs a larger step than the full-scale
        // fine-tuning rate to converge in a few hundred steps here.
        train.learning_rate = 5e-3;
        train.steps = 500;
    }
};

/// One deterministic training cell. k is ignored by the baselines, which
/// adapt the untruncated base.
RunReport run_cell(const SynthTask& task, Method method, std::size_t r, std::size_t k,
                   const HarnessConfig& config, std::uint64_t seed);

struct CompareRow {
    std::string method;
    std::size_t r = 0;
    std::size_t k = 0;
    std::size_t param_count = 0;
    double median_test = 0.0;
    double iqr_test = 0.0;
    double median_train = 0.0;
};

struct CompareTable {
    std::vector<CompareRow> rows;
    double floor_mse = 0.0;
};

/// Equal-budget comparison: identical data and per-seed streams for every
/// method; (method, seed) cells run in parallel, aggregated by index.
CompareTable compare(const SynthTask& task, const std::vector<Method>& methods,
                     std::size_t r, std::size_t k, const HarnessConfig& config,
                     std::size_t n_seeds);

struct SweepResult {
    std::string axis;  // "k" or "r"
    std::string method;
    std::vector<std::size_t> values;
    std::vector<double> median_test;
    std::vector<double> iqr_test;
};

SweepResult sweep_truncation(const SynthTask& task, const std::vector<std::size_t>& k_grid,
                             std::size_t r, const HarnessConfig& config,
                             std::size_t n_seeds, Method method = Method::kasa);

SweepResult sweep_rank(const SynthTask& task, const std::vector<std::size_t>& r_grid,
                       std::size_t k, const HarnessConfig& config, std::size_t n_seeds,
                       Method method = Method::kasa);

/// Five-variant ladder: (1) LoRA; (2) truncation + LoRA; (3) truncation +
/// singular-value adaptation; (4) + sigma regularization; (5) full KaSA.
/// Variants (1) and (5) share the code paths of compare()'s lora and kasa
/// rows, so they match those bitwise under identical seeds.
CompareTable ablation(const SynthTask& task, std::size_t r, std::size_t k,
                      const HarnessConfig& config, std::size_t n_seeds);

/// Grid of |delta_sigma| per (run index, singular-value index), written with
/// row/column headers at 17 significant digits.
void export_heatmap(const std::vector<RunReport>& reports, const std::string& path);

void write_compare_csv(const CompareTable& table, const std::string& path);
void write_sweep_csv(const SweepResult& result, const std::string& path);

/// FNV-1a over the raw bytes of the train/test batches; used to verify that
/// every method consumes the identical data stream.
std::uint64_t dataset_hash(const Dataset& data);

double median_of(std::vector<double> values);
double iqr_of(std::vector<double> values);

}  // namespace kasa
