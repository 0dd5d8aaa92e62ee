// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mteo/kernels.hpp"

#include <cmath>
#include <vector>

#ifdef MTEO_HAVE_OPENMP
#include <omp.h>
#endif

namespace mteo::kernels {

namespace {

// Row work below this many flops stays on one thread.
constexpr std::size_t kParallelThreshold = 1u << 15;

inline void matmul_row(const double* a, const double* b, double* c, std::size_t k, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) c[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
        const double av = a[p];
        const double* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
    }
}

// c += a * bt, where bt is B^T laid out [k x n].
inline void matmul_acc_row(const double* a, const double* bt, double* c, std::size_t k, std::size_t n) {
    for (std::size_t p = 0; p < k; ++p) {
        const double av = a[p];
        const double* brow = bt + p * n;
        for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
    }
}

std::vector<double> transpose(std::span<const double> b, std::size_t rows, std::size_t cols) {
    std::vector<double> t(rows * cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = b[r * cols + c];
    return t;
}

// One output row of A^T B: c_row(p) = sum_i a[i][p] * b[i][:]
inline void matmul_tn_row(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                          std::size_t n, std::size_t p) {
    for (std::size_t i = 0; i < m; ++i) {
        const double av = a[i * k + p];
        const double* brow = b + i * n;
        for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
    }
}

inline double row_distance_sum(const double* a, std::size_t i, const double* b, std::size_t nb,
                               std::size_t dim, bool skip_diagonal) {
    double acc = 0.0;
    const double* ai = a + i * dim;
    for (std::size_t j = 0; j < nb; ++j) {
        if (skip_diagonal && i == j) continue;
        const double* bj = b + j * dim;
        double d2 = 0.0;
        for (std::size_t q = 0; q < dim; ++q) {
            const double d = ai[q] - bj[q];
            d2 += d * d;
        }
        acc += std::sqrt(d2);
    }
    return acc;
}

}  // namespace

int max_threads() {
#ifdef MTEO_HAVE_OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
            std::size_t k, std::size_t n) {
    const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelThreshold)
    for (std::ptrdiff_t i = 0; i < rows; ++i) matmul_row(a.data() + i * k, b.data(), c.data() + i * n, k, n);
}

void matmul_serial(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
                   std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) matmul_row(a.data() + i * k, b.data(), c.data() + i * n, k, n);
}

void matmul_nt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
                   std::size_t k, std::size_t n) {
    const auto bt = transpose(b, n, k);
    const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelThreshold)
    for (std::ptrdiff_t i = 0; i < rows; ++i) matmul_acc_row(a.data() + i * k, bt.data(), c.data() + i * n, k, n);
}

void matmul_nt_acc_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                          std::size_t m, std::size_t k, std::size_t n) {
    const auto bt = transpose(b, n, k);
    for (std::size_t i = 0; i < m; ++i) matmul_acc_row(a.data() + i * k, bt.data(), c.data() + i * n, k, n);
}

void matmul_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
                   std::size_t k, std::size_t n) {
    const auto rows = static_cast<std::ptrdiff_t>(k);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelThreshold)
    for (std::ptrdiff_t p = 0; p < rows; ++p) matmul_tn_row(a.data(), b.data(), c.data() + p * n, m, k, n, p);
}

void matmul_tn_acc_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                          std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t p = 0; p < k; ++p) matmul_tn_row(a.data(), b.data(), c.data() + p * n, m, k, n, p);
}

double pairwise_distance_sum(std::span<const double> a, std::size_t na, std::span<const double> b, std::size_t nb,
                             std::size_t dim, bool skip_diagonal) {
    std::vector<double> partial(na, 0.0);
    const auto rows = static_cast<std::ptrdiff_t>(na);
#pragma omp parallel for schedule(dynamic, 64) if (na * nb > kParallelThreshold)
    for (std::ptrdiff_t i = 0; i < rows; ++i)
        partial[i] = row_distance_sum(a.data(), i, b.data(), nb, dim, skip_diagonal);
    double total = 0.0;
    for (double v : partial) total += v;
    return total;
}

double pairwise_distance_sum_serial(std::span<const double> a, std::size_t na, std::span<const double> b,
                                    std::size_t nb, std::size_t dim, bool skip_diagonal) {
    double total = 0.0;
    for (std::size_t i = 0; i < na; ++i) total += row_distance_sum(a.data(), i, b.data(), nb, dim, skip_diagonal);
    return total;
}

}  // namespace mteo::kernels
