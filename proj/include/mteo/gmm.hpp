// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "mteo/denoiser.hpp"
#include "mteo/tensor.hpp"

namespace mteo {

/// Isotropic Gaussian mixture in the plane (or any dim) with a shared component std.
struct GmmSpec {
    std::vector<std::vector<double>> means;
    double std = 0.5;
    std::vector<double> weights;

    /// K points evenly spaced on a circle of the given radius, uniform weights.
    static GmmSpec circle(std::size_t k = 8, double radius = 8.0, double std = 0.5);

    std::size_t n_components() const { return means.size(); }
    std::size_t dim() const { return means.empty() ? 0 : means[0].size(); }
    std::vector<double> mixture_mean() const;
    /// Per-coordinate variance of the mixture.
    std::vector<double> mixture_variance() const;
    void validate() const;
};

Tensor sample_gmm(const GmmSpec& spec, std::size_t n, std::uint64_t seed);

/// Exact E[x0 | x0 + sigma n = x] for each row of x.
Tensor analytic_denoiser(const GmmSpec& spec, const Tensor& x, double sigma);

/// Closed-form denoiser usable by the samplers. Ignores conditioning overrides.
class AnalyticModel final : public DenoiserModel {
public:
    explicit AnalyticModel(GmmSpec spec) : spec_(std::move(spec)) { spec_.validate(); }
    ad::Var denoise(ad::Tape& tape, const ad::Var& x, double t, std::span<const LayerInput> overrides) const override;
    const GmmSpec& spec() const { return spec_; }

private:
    GmmSpec spec_;
};

}  // namespace mteo
