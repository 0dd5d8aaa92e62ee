// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>

// Hot loops of the library. Each kernel has an OpenMP-parallel version and a
// serial reference. Parallel versions split work by output row and never
// reorder a floating-point reduction, so both produce bit-identical results.

namespace mteo::kernels {

/// C[m x n] = A[m x k] * B[k x n]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n);

/// C[m x n] += A[m x k] * B[n x k]^T
void matmul_nt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n);
void matmul_nt_acc_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                          std::size_t m, std::size_t k, std::size_t n);

/// C[k x n] += A[m x k]^T * B[m x n]
void matmul_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n);
void matmul_tn_acc_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                          std::size_t m, std::size_t k, std::size_t n);

/// Sum over all pairs (i, j) of ||a_i - b_j|| for row sets a[na x dim], b[nb x dim].
/// When `skip_diagonal` is set, pairs with i == j are excluded (a and b must be the same set).
double pairwise_distance_sum(std::span<const double> a, std::size_t na, std::span<const double> b,
                             std::size_t nb, std::size_t dim, bool skip_diagonal);
double pairwise_distance_sum_serial(std::span<const double> a, std::size_t na,
                                    std::span<const double> b, std::size_t nb, std::size_t dim,
                                    bool skip_diagonal);

int max_threads();

}  // namespace mteo::kernels
