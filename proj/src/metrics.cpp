// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mteo/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "mteo/kernels.hpp"
#include "mteo/rng.hpp"

namespace mteo {

namespace {

void check_sets(const Tensor& a, const Tensor& b, const char* op) {
    if (a.empty() || b.empty()) throw Error(std::string(op) + ": empty point set");
    if (a.cols() != b.cols())
        throw Error(std::string(op) + ": dimension mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

double within_mean(const Tensor& a) {
    const std::size_t n = a.rows();
    if (n < 2) return 0.0;
    const double s = kernels::pairwise_distance_sum(a.data(), n, a.data(), n, a.cols(), true);
    return s / (static_cast<double>(n) * static_cast<double>(n - 1));
}

}  // namespace

double energy_distance_u(const Tensor& a, const Tensor& b) {
    check_sets(a, b, "energy_distance");
    const std::size_t na = a.rows(), nb = b.rows(), d = a.cols();
    // Both orders are summed so the result does not depend on argument order.
    const double cross = kernels::pairwise_distance_sum(a.data(), na, b.data(), nb, d, false) +
                         kernels::pairwise_distance_sum(b.data(), nb, a.data(), na, d, false);
    const double mean_ab = cross / (2.0 * static_cast<double>(na) * static_cast<double>(nb));
    return 2.0 * mean_ab - (within_mean(a) + within_mean(b));
}

double energy_distance(const Tensor& a, const Tensor& b) { return std::max(0.0, energy_distance_u(a, b)); }

double wasserstein1_sorted(std::vector<double>& a, std::vector<double>& b) {
    if (a.empty() || b.empty()) throw Error("wasserstein1: empty point set");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    // Integrate |F_a^-1(u) - F_b^-1(u)| over u by merging the two quantile step functions.
    std::size_t i = 0, j = 0;
    double u = 0.0, total = 0.0;
    while (i < a.size() && j < b.size()) {
        const double ua = static_cast<double>(i + 1) / na;
        const double ub = static_cast<double>(j + 1) / nb;
        const double next = std::min(ua, ub);
        total += (next - u) * std::abs(a[i] - b[j]);
        u = next;
        if (ua <= ub) ++i;
        if (ub <= ua) ++j;
    }
    return total;
}

double sliced_wasserstein(const Tensor& a, const Tensor& b, std::size_t n_proj, std::uint64_t seed) {
    check_sets(a, b, "sliced_wasserstein");
    if (n_proj == 0) throw Error("sliced_wasserstein: need at least one projection");
    const std::size_t d = a.cols();
    Rng rng(seed, "sliced-wasserstein");
    std::vector<double> dir(d), pa(a.rows()), pb(b.rows());
    double total = 0.0;
    for (std::size_t k = 0; k < n_proj; ++k) {
        double norm = 0.0;
        for (auto& v : dir) {
            v = rng.normal();
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (auto& v : dir) v /= norm;
        for (std::size_t r = 0; r < a.rows(); ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < d; ++c) s += a.at(r, c) * dir[c];
            pa[r] = s;
        }
        for (std::size_t r = 0; r < b.rows(); ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < d; ++c) s += b.at(r, c) * dir[c];
            pb[r] = s;
        }
        total += wasserstein1_sorted(pa, pb);
    }
    return total / static_cast<double>(n_proj);
}

}  // namespace mteo
