// Serial reference vs OpenMP kernels at a few sizes.
// Arg is the square size; OMP_NUM_THREADS controls the parallel side.

#include <benchmark/benchmark.h>

#include <vector>

#include "syncmask/kernels.hpp"
#include "syncmask/rng.hpp"

namespace k = syncmask::kernels;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
    syncmask::Rng rng(seed);
    std::vector<double> v(n);
    for (double& x : v) {
        x = rng.uniform(-1.0, 1.0);
    }
    return v;
}

using Gemm = void (*)(std::span<const double>, std::span<const double>, std::span<double>, int, int, int, bool);

template <Gemm F>
void BM_gemm(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const auto sz = static_cast<std::size_t>(n) * static_cast<std::size_t>(n);
    const auto a = random_values(sz, 1);
    const auto b = random_values(sz, 2);
    std::vector<double> c(sz);
    for (auto _ : state) {
        F(a, b, c, n, n, n, false);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(sz) * n);
    state.counters["threads"] = k::max_threads();
}

using Softmax = void (*)(std::span<const double>, std::span<double>, int, int);

template <Softmax F>
void BM_softmax(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const auto sz = static_cast<std::size_t>(n) * static_cast<std::size_t>(n);
    const auto in = random_values(sz, 3);
    std::vector<double> out(sz);
    for (auto _ : state) {
        F(in, out, n, n);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(sz));
}

}  // namespace

BENCHMARK(BM_gemm<k::gemm_serial>)->Name("gemm/serial")->Arg(32)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_gemm<k::gemm_parallel>)->Name("gemm/parallel")->Arg(32)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_gemm<k::gemm_tn_serial>)->Name("gemm_tn/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_gemm<k::gemm_tn_parallel>)->Name("gemm_tn/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_gemm<k::gemm_nt_serial>)->Name("gemm_nt/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_gemm<k::gemm_nt_parallel>)->Name("gemm_nt/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_softmax<k::softmax_rows_serial>)->Name("softmax/serial")->Arg(64)->Arg(512);
BENCHMARK(BM_softmax<k::softmax_rows_parallel>)->Name("softmax/parallel")->Arg(64)->Arg(512);

BENCHMARK_MAIN();
