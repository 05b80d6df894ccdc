// Serial reference kernels vs the OpenMP versions, at the shapes training uses.

#include <benchmark/benchmark.h>

#include <vector>

#include "dph/kernels.hpp"
#include "dph/rng.hpp"

namespace {

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
    dph::Rng rng(seed);
    std::vector<float> v(n);
    for (float& x : v) {
        x = static_cast<float>(rng.normal());
    }
    return v;
}

// Args: m (rows = sequence length), k, n.
void shapes(benchmark::internal::Benchmark* b) {
    b->Args({32, 64, 64})->Args({32, 64, 172})->Args({32, 172, 64})->Args({128, 64, 172})->Args({128, 256, 256});
}

template <bool Parallel>
void BM_matmul(benchmark::State& state) {
    const int m = static_cast<int>(state.range(0));
    const int k = static_cast<int>(state.range(1));
    const int n = static_cast<int>(state.range(2));
    const auto a = random_vec(static_cast<std::size_t>(m) * k, 1);
    const auto w = random_vec(static_cast<std::size_t>(k) * n, 2);
    std::vector<float> c(static_cast<std::size_t>(m) * n);
    for (auto _ : state) {
        if constexpr (Parallel) {
            dph::kernels::matmul<float, float>(a, w, c, m, k, n);
        } else {
            dph::kernels::reference::matmul<float, float>(a, w, c, m, k, n);
        }
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * 2LL * m * k * n);
}

template <bool Parallel>
void BM_matmul_bt(benchmark::State& state) {
    const int m = static_cast<int>(state.range(0));
    const int k = static_cast<int>(state.range(1));
    const int n = static_cast<int>(state.range(2));
    const auto a = random_vec(static_cast<std::size_t>(m) * k, 3);
    const auto w = random_vec(static_cast<std::size_t>(n) * k, 4);
    std::vector<float> c(static_cast<std::size_t>(m) * n);
    for (auto _ : state) {
        if constexpr (Parallel) {
            dph::kernels::matmul_bt<float, float>(a, w, c, m, k, n);
        } else {
            dph::kernels::reference::matmul_bt<float, float>(a, w, c, m, k, n);
        }
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * 2LL * m * k * n);
}

template <bool Parallel>
void BM_accumulate_at_b(benchmark::State& state) {
    const int m = static_cast<int>(state.range(0));
    const int k = static_cast<int>(state.range(1));
    const int n = static_cast<int>(state.range(2));
    const auto a = random_vec(static_cast<std::size_t>(m) * k, 5);
    const auto b = random_vec(static_cast<std::size_t>(m) * n, 6);
    std::vector<double> g(static_cast<std::size_t>(k) * n);
    for (auto _ : state) {
        if constexpr (Parallel) {
            dph::kernels::accumulate_at_b<float, double>(a, b, g, m, k, n);
        } else {
            dph::kernels::reference::accumulate_at_b<float, double>(a, b, g, m, k, n);
        }
        benchmark::DoNotOptimize(g.data());
    }
    state.SetItemsProcessed(state.iterations() * 2LL * m * k * n);
}

BENCHMARK(BM_matmul<false>)->Apply(shapes);
BENCHMARK(BM_matmul<true>)->Apply(shapes);
BENCHMARK(BM_matmul_bt<false>)->Apply(shapes);
BENCHMARK(BM_matmul_bt<true>)->Apply(shapes);
BENCHMARK(BM_accumulate_at_b<false>)->Apply(shapes);
BENCHMARK(BM_accumulate_at_b<true>)->Apply(shapes);

}  // namespace

BENCHMARK_MAIN();
