#include "kasa/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "kasa/rng.hpp"
#include "kasa/svd.hpp"

namespace kasa {

namespace {

Matrix random_orthonormal(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix g(rows, cols);
    for (double& v : g.data()) v = rng.normal();
    return svd(g).u;
}

Matrix from_spectrum(const Matrix& u, const Matrix& v, std::span<const double> sigma) {
    Matrix scaled = u;
    for (std::size_t i = 0; i < scaled.rows(); ++i) {
        for (std::size_t j = 0; j < scaled.cols(); ++j) scaled(i, j) *= sigma[j];
    }
    return matmul(scaled, transpose(v));
}

Batch make_batch(const Matrix& teacher, std::size_t samples, double obs_noise, Rng& rng) {
    const std::size_t m = teacher.cols();
    Matrix x(m, samples);
    for (double& v : x.data()) v = rng.normal();
    Matrix y = matmul(teacher, x);
    for (double& v : y.data()) v += obs_noise * rng.normal();
    Batch b;
    b.kind = LossKind::mse;
    b.inputs = std::move(x);
    b.targets = std::move(y);
    return b;
}

double quantile(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw std::invalid_argument("quantile of empty set");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

// Solve A z = b in place for square A via partial-pivot Gaussian elimination.
std::vector<double> solve_linear(Matrix a, std::vector<double> b) {
    const std::size_t n = a.rows();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t row = col + 1; row < n; ++row) {
            if (std::abs(a(row, col)) > std::abs(a(pivot, col))) pivot = row;
        }
        if (a(pivot, col) == 0.0) {
            throw std::runtime_error("least squares: singular normal equations");
        }
        if (pivot != col) {
            for (std::size_t j = 0; j < n; ++j) std::swap(a(col, j), a(pivot, j));
            std::swap(b[col], b[pivot]);
        }
        for (std::size_t row = col + 1; row < n; ++row) {
            const double f = a(row, col) / a(col, col);
            if (f == 0.0) continue;
            for (std::size_t j = col; j < n; ++j) a(row, j) -= f * a(col, j);
            b[row] -= f * b[col];
        }
    }
    std::vector<double> x(n, 0.0);
    for (std::size_t i = n; i-- > 0;) {
        double acc = b[i];
        for (std::size_t j = i + 1; j < n; ++j) acc -= a(i, j) * x[j];
        x[i] = acc / a(i, i);
    }
    return x;
}

double batch_mse(const Matrix& w, const Batch& batch) {
    const Matrix pred = matmul(w, batch.inputs);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = pred.data()[i] - batch.targets.data()[i];
        acc += e * e;
    }
    return acc / static_cast<double>(batch.size());
}

}  // namespace

double median_of(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    return quantile(values, 0.5);
}

double iqr_of(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    return quantile(values, 0.75) - quantile(values, 0.25);
}

SynthTask make_task(std::size_t n, std::size_t m, std::size_t planted_noise_rank,
                    std::size_t task_delta_rank, double noise_scale,
                    std::size_t samples, std::uint64_t seed) {
    const std::size_t p = std::min(n, m);
    if (planted_noise_rank + task_delta_rank >= p) {
        throw std::invalid_argument("make_task: planted + delta ranks must be below min(n, m)");
    }
    if (samples < 5) {
        throw std::invalid_argument("make_task: need at least 5 samples for the 80/20 split");
    }
    Rng rng(seed);
    const Matrix u = random_orthonormal(n, p, rng);
    const Matrix v = random_orthonormal(m, p, rng);

    const std::size_t signal_rank = p - planted_noise_rank;
    std::vector<double> sigma(p, 0.0);
    for (std::size_t i = 0; i < signal_rank; ++i) {
        const double t = signal_rank > 1
                             ? static_cast<double>(i) / static_cast<double>(signal_rank - 1)
                             : 0.0;
        sigma[i] = std::pow(10.0, 1.0 - t);  // log-spaced 10 down to 1
    }
    for (std::size_t i = 0; i < planted_noise_rank; ++i) {
        const double t = planted_noise_rank > 1
                             ? static_cast<double>(i) / static_cast<double>(planted_noise_rank - 1)
                             : 0.0;
        sigma[signal_rank + i] = noise_scale * (0.2 - 0.15 * t);  // 0.2 down to 0.05
    }

    SynthTask task;
    task.planted_noise_rank = planted_noise_rank;
    task.task_delta_rank = task_delta_rank;
    task.noise_scale = noise_scale;
    task.seed = seed;
    task.w0 = from_spectrum(u, v, sigma);

    std::vector<double> signal_sigma = sigma;
    for (std::size_t i = signal_rank; i < p; ++i) signal_sigma[i] = 0.0;
    Matrix w_signal = from_spectrum(u, v, signal_sigma);

    // Low-rank task delta inside the leading signal directions.
    Matrix delta(n, m);
    for (std::size_t j = 0; j < task_delta_rank; ++j) {
        const double c = 0.5 * rng.normal();
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t l = 0; l < m; ++l) {
                delta(i, l) += c * u(i, j) * v(l, j);
            }
        }
    }
    task.w_task = add(w_signal, delta);

    const std::size_t n_test = samples / 5;
    const std::size_t n_train = samples - n_test;
    task.data.train = make_batch(task.w_task, n_train, 0.01, rng);
    task.data.test = make_batch(task.w_task, n_test, 0.01, rng);
    return task;
}

double least_squares_floor(const SynthTask& task) {
    const Batch& train = task.data.train;
    const Matrix xxt = matmul(train.inputs, transpose(train.inputs));  // m x m
    const Matrix yxt = matmul(train.targets, transpose(train.inputs));  // n x m
    const std::size_t n = yxt.rows(), m = yxt.cols();
    Matrix w(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> rhs(m);
        for (std::size_t j = 0; j < m; ++j) rhs[j] = yxt(i, j);
        const std::vector<double> row = solve_linear(xxt, std::move(rhs));
        for (std::size_t j = 0; j < m; ++j) w(i, j) = row[j];
    }
    return batch_mse(w, task.data.test);
}

const char* method_name(Method m) {
    switch (m) {
        case Method::kasa: return "kasa";
        case Method::lora: return "lora";
        case Method::pissa: return "pissa";
        case Method::milora: return "milora";
    }
    return "?";
}

Method method_from_name(const std::string& name) {
    if (name == "kasa") return Method::kasa;
    if (name == "lora") return Method::lora;
    if (name == "pissa") return Method::pissa;
    if (name == "milora") return Method::milora;
    throw std::invalid_argument("unknown method: " + name);
}

RunReport run_cell(const SynthTask& task, Method method, std::size_t r, std::size_t k,
                   const HarnessConfig& config, std::uint64_t seed) {
    TrainConfig tc = config.train;
    tc.seed = seed;
    switch (method) {
        case Method::kasa: {
            const TruncatedBase base = truncate_base(task.w0, k);
            KasaAdapter adapter = init_kasa(base, r, config.alpha, seed, config.init_std);
            return train_kasa(base, adapter, task.data, tc);
        }
        case Method::lora: {
            LowRankAdapter adapter = init_lora(task.w0, r, config.alpha, seed, config.init_std);
            return train_lowrank(adapter, task.data, tc);
        }
        case Method::pissa: {
            LowRankAdapter adapter = init_pissa(task.w0, r, seed);
            return train_lowrank(adapter, task.data, tc);
        }
        case Method::milora: {
            LowRankAdapter adapter = init_milora(task.w0, r, seed);
            return train_lowrank(adapter, task.data, tc);
        }
    }
    throw std::logic_error("run_cell: unreachable");
}

namespace {

CompareRow summarize(const std::string& label, std::size_t r, std::size_t k,
                     const std::vector<RunReport>& reports) {
    CompareRow row;
    row.method = label;
    row.r = r;
    row.k = k;
    row.param_count = reports.front().parameter_count;
    std::vector<double> test, train;
    for (const RunReport& rep : reports) {
        test.push_back(rep.final_test_metric);
        train.push_back(rep.final_train_metric);
    }
    row.median_test = median_of(test);
    row.iqr_test = iqr_of(std::move(test));
    row.median_train = median_of(std::move(train));
    return row;
}

}  // namespace

CompareTable compare(const SynthTask& task, const std::vector<Method>& methods,
                     std::size_t r, std::size_t k, const HarnessConfig& config,
                     std::size_t n_seeds) {
    if (methods.empty() || n_seeds == 0) {
        throw std::invalid_argument("compare: need at least one method and one seed");
    }
    const std::size_t cells = methods.size() * n_seeds;
    std::vector<RunReport> reports(cells);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t idx = 0; idx < static_cast<std::ptrdiff_t>(cells); ++idx) {
        const std::size_t mi = static_cast<std::size_t>(idx) / n_seeds;
        const std::size_t si = static_cast<std::size_t>(idx) % n_seeds;
        reports[static_cast<std::size_t>(idx)] =
            run_cell(task, methods[mi], r, k, config, config.train.seed + si);
    }
    CompareTable table;
    table.floor_mse = least_squares_floor(task);
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        std::vector<RunReport> slice(reports.begin() + static_cast<std::ptrdiff_t>(mi * n_seeds),
                                     reports.begin() + static_cast<std::ptrdiff_t>((mi + 1) * n_seeds));
        table.rows.push_back(summarize(method_name(methods[mi]), r, k, slice));
    }
    return table;
}

namespace {

SweepResult sweep_axis(const SynthTask& task, const std::string& axis,
                       const std::vector<std::size_t>& grid, std::size_t fixed,
                       const HarnessConfig& config, std::size_t n_seeds, Method method) {
    if (grid.empty() || n_seeds == 0) {
        throw std::invalid_argument("sweep: need a nonempty grid and at least one seed");
    }
    for (std::size_t i = 1; i < grid.size(); ++i) {
        if (grid[i] <= grid[i - 1]) {
            throw std::invalid_argument("sweep: grid must be strictly increasing");
        }
    }
    const std::size_t cells = grid.size() * n_seeds;
    std::vector<RunReport> reports(cells);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t idx = 0; idx < static_cast<std::ptrdiff_t>(cells); ++idx) {
        const std::size_t gi = static_cast<std::size_t>(idx) / n_seeds;
        const std::size_t si = static_cast<std::size_t>(idx) % n_seeds;
        const std::size_t r = axis == "r" ? grid[gi] : fixed;
        const std::size_t k = axis == "k" ? grid[gi] : fixed;
        reports[static_cast<std::size_t>(idx)] =
            run_cell(task, method, r, k, config, config.train.seed + si);
    }
    SweepResult res;
    res.axis = axis;
    res.method = method_name(method);
    res.values = grid;
    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
        std::vector<double> test;
        for (std::size_t si = 0; si < n_seeds; ++si) {
            test.push_back(reports[gi * n_seeds + si].final_test_metric);
        }
        res.median_test.push_back(median_of(test));
        res.iqr_test.push_back(iqr_of(std::move(test)));
    }
    return res;
}

}  // namespace

SweepResult sweep_truncation(const SynthTask& task, const std::vector<std::size_t>& k_grid,
                             std::size_t r, const HarnessConfig& config,
                             std::size_t n_seeds, Method method) {
    return sweep_axis(task, "k", k_grid, r, config, n_seeds, method);
}

SweepResult sweep_rank(const SynthTask& task, const std::vector<std::size_t>& r_grid,
                       std::size_t k, const HarnessConfig& config, std::size_t n_seeds,
                       Method method) {
    return sweep_axis(task, "r", r_grid, k, config, n_seeds, method);
}

CompareTable ablation(const SynthTask& task, std::size_t r, std::size_t k,
                      const HarnessConfig& config, std::size_t n_seeds) {
    if (n_seeds == 0) throw std::invalid_argument("ablation: need at least one seed");
    enum Variant { v_lora, v_trunc_lora, v_sva, v_sva_l2, v_full, n_variants };
    static const char* labels[n_variants] = {"lora", "trunc+lora", "trunc+sva",
                                             "trunc+sva+l2", "kasa"};
    const std::size_t cells = static_cast<std::size_t>(n_variants) * n_seeds;
    std::vector<RunReport> reports(cells);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t idx = 0; idx < static_cast<std::ptrdiff_t>(cells); ++idx) {
        const std::size_t vi = static_cast<std::size_t>(idx) / n_seeds;
        const std::size_t si = static_cast<std::size_t>(idx) % n_seeds;
        const std::uint64_t seed = config.train.seed + si;
        TrainConfig tc = config.train;
        tc.seed = seed;
        RunReport rep;
        switch (vi) {
            case v_lora:
                rep = run_cell(task, Method::lora, r, k, config, seed);
                break;
            case v_trunc_lora: {
                const TruncatedBase base = truncate_base(task.w0, k);
                LowRankAdapter adapter =
                    init_lora(base.w_world, r, config.alpha, seed, config.init_std);
                rep = train_lowrank(adapter, task.data, tc);
                break;
            }
            case v_sva: {
                HarnessConfig hc = config;
                hc.train.beta = 0.0;
                hc.train.gamma = 0.0;
                rep = run_cell(task, Method::kasa, r, k, hc, seed);
                break;
            }
            case v_sva_l2: {
                HarnessConfig hc = config;
                hc.train.gamma = 0.0;
                rep = run_cell(task, Method::kasa, r, k, hc, seed);
                break;
            }
            case v_full:
                rep = run_cell(task, Method::kasa, r, k, config, seed);
                break;
        }
        reports[static_cast<std::size_t>(idx)] = std::move(rep);
    }
    CompareTable table;
    table.floor_mse = least_squares_floor(task);
    for (std::size_t vi = 0; vi < n_variants; ++vi) {
        std::vector<RunReport> slice(reports.begin() + static_cast<std::ptrdiff_t>(vi * n_seeds),
                                     reports.begin() + static_cast<std::ptrdiff_t>((vi + 1) * n_seeds));
        table.rows.push_back(summarize(labels[vi], r, k, slice));
    }
    return table;
}

void export_heatmap(const std::vector<RunReport>& reports, const std::string& path) {
    if (reports.empty()) {
        throw std::invalid_argument("export_heatmap: no reports");
    }
    const std::size_t r = reports.front().final_delta_sigma.size();
    if (r == 0) {
        throw std::invalid_argument("export_heatmap: reports carry no delta_sigma snapshot");
    }
    for (const RunReport& rep : reports) {
        if (rep.final_delta_sigma.size() != r) {
            throw std::invalid_argument("export_heatmap: inconsistent adapter ranks");
        }
    }
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "run";
    for (std::size_t j = 0; j < r; ++j) f << " sv" << j;
    f << '\n';
    char buf[64];
    for (std::size_t i = 0; i < reports.size(); ++i) {
        f << i;
        for (std::size_t j = 0; j < r; ++j) {
            std::snprintf(buf, sizeof buf, " %.17g", std::abs(reports[i].final_delta_sigma[j]));
            f << buf;
        }
        f << '\n';
    }
}

void write_compare_csv(const CompareTable& table, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "method,r,k,params,median_test_mse,iqr_test_mse,median_train_mse,floor_mse\n";
    char buf[256];
    for (const CompareRow& row : table.rows) {
        std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%zu,%.17g,%.17g,%.17g,%.17g\n",
                      row.method.c_str(), row.r, row.k, row.param_count, row.median_test,
                      row.iqr_test, row.median_train, table.floor_mse);
        f << buf;
    }
}

void write_sweep_csv(const SweepResult& result, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "axis,value,method,median_test_mse,iqr_test_mse\n";
    char buf[256];
    for (std::size_t i = 0; i < result.values.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%s,%zu,%s,%.17g,%.17g\n", result.axis.c_str(),
                      result.values[i], result.method.c_str(), result.median_test[i],
                      result.iqr_test[i]);
        f << buf;
    }
}

std::uint64_t dataset_hash(const Dataset& data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::span<const double> values) {
        for (double v : values) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof bits);
            for (int b = 0; b < 64; b += 8) {
                h ^= (bits >> b) & 0xff;
                h *= 0x100000001b3ULL;
            }
        }
    };
    mix(data.train.inputs.data());
    mix(data.train.targets.data());
    mix(data.test.inputs.data());
    mix(data.test.targets.data());
    return h;
}

}  // namespace kasa
