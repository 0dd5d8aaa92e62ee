// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <vector>

#include "mteo/kernels.hpp"
#include "mteo/rng.hpp"

namespace {

std::vector<double> filled(std::size_t n, std::uint64_t seed) {
    mteo::Rng rng(seed, "bench");
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

template <auto Fn>
void BM_Matmul(benchmark::State& state) {
    const auto m = static_cast<std::size_t>(state.range(0));
    const std::size_t k = 64, n = 64;
    const auto a = filled(m * k, 1), b = filled(k * n, 2);
    std::vector<double> c(m * n);
    for (auto _ : state) {
        Fn(a, b, c, m, k, n);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * k * n));
}

template <auto Fn>
void BM_MatmulNtAcc(benchmark::State& state) {
    const auto m = static_cast<std::size_t>(state.range(0));
    const std::size_t k = 64, n = 64;
    const auto a = filled(m * k, 1), b = filled(n * k, 2);
    std::vector<double> c(m * n);
    for (auto _ : state) {
        Fn(a, b, c, m, k, n);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * k * n));
}

template <auto Fn>
void BM_Pairwise(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = filled(2 * n, 3), b = filled(2 * 4 * n, 4);
    for (auto _ : state) benchmark::DoNotOptimize(Fn(a, n, b, 4 * n, 2, false));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * 4 * n));
}

}  // namespace

BENCHMARK(BM_Matmul<mteo::kernels::matmul>)->Name("matmul/parallel")->RangeMultiplier(4)->Range(64, 4096);
BENCHMARK(BM_Matmul<mteo::kernels::matmul_serial>)->Name("matmul/serial")->RangeMultiplier(4)->Range(64, 4096);
BENCHMARK(BM_MatmulNtAcc<mteo::kernels::matmul_nt_acc>)->Name("matmul_nt_acc/parallel")->RangeMultiplier(4)->Range(64, 4096);
BENCHMARK(BM_MatmulNtAcc<mteo::kernels::matmul_nt_acc_serial>)->Name("matmul_nt_acc/serial")->RangeMultiplier(4)->Range(64, 4096);
BENCHMARK(BM_Pairwise<mteo::kernels::pairwise_distance_sum>)->Name("pairwise_distance/parallel")->RangeMultiplier(4)->Range(256, 4096);
BENCHMARK(BM_Pairwise<mteo::kernels::pairwise_distance_sum_serial>)->Name("pairwise_distance/serial")->RangeMultiplier(4)->Range(256, 4096);

BENCHMARK_MAIN();
