// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "mteo/tensor.hpp"

namespace mteo {

/// Two-sample energy statistic 2E|a-b| - E|a-a'| - E|b-b'| with the within-set
/// terms averaged over distinct pairs (U-statistic). May be slightly negative.
/// A set with a single point contributes zero to its within-set term.
double energy_distance_u(const Tensor& a, const Tensor& b);

/// max(0, energy_distance_u(a, b)). Symmetric bitwise.
double energy_distance(const Tensor& a, const Tensor& b);

/// Mean over `n_proj` random unit directions of the 1-D Wasserstein-1 distance
/// between the projected empirical distributions.
double sliced_wasserstein(const Tensor& a, const Tensor& b, std::size_t n_proj, std::uint64_t seed);

/// Exact W1 between two empirical 1-D distributions (inputs are sorted in place).
double wasserstein1_sorted(std::vector<double>& a, std::vector<double>& b);

}  // namespace mteo
