// Serial reference vs OpenMP kernels on desk-scale shapes.

#include <benchmark/benchmark.h>

#include "kasa/adapter.hpp"
#include "kasa/matrix.hpp"
#include "kasa/rng.hpp"
#include "kasa/svd.hpp"

namespace {

kasa::Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    kasa::Rng rng(seed);
    kasa::Matrix m(rows, cols);
    for (double& v : m.data()) v = rng.normal();
    return m;
}

void bm_matmul_serial(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const kasa::Matrix a = random_matrix(n, n, 1);
    const kasa::Matrix b = random_matrix(n, n, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(kasa::serial::matmul(a, b));
    }
}

void bm_matmul_openmp(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const kasa::Matrix a = random_matrix(n, n, 1);
    const kasa::Matrix b = random_matrix(n, n, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(kasa::matmul(a, b));
    }
}

void bm_forward(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const kasa::Matrix w0 = random_matrix(n, n, 3);
    const kasa::TruncatedBase base = kasa::truncate_base(w0, 8);
    const kasa::KasaAdapter adapter = kasa::init_kasa(base, 8, 16.0, 4);
    const kasa::Matrix x = random_matrix(n, 64, 5);
    for (auto _ : state) {
        benchmark::DoNotOptimize(kasa::forward(base, adapter, x));
    }
}

void bm_svd(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const kasa::Matrix a = random_matrix(n, n, 6);
    for (auto _ : state) {
        benchmark::DoNotOptimize(kasa::svd(a));
    }
}

}  // namespace

BENCHMARK(bm_matmul_serial)->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(bm_matmul_openmp)->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(bm_forward)->Arg(64)->Arg(256);
BENCHMARK(bm_svd)->Arg(32)->Arg(96);

BENCHMARK_MAIN();
