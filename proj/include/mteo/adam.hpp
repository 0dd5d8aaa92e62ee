// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mteo/autodiff.hpp"

namespace mteo {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam moments for a fixed list of parameters.
class AdamState {
public:
    AdamState() = default;
    AdamState(std::span<ad::Parameter* const> params, AdamConfig cfg);

    const AdamConfig& config() const { return cfg_; }
    std::uint64_t steps() const { return step_; }
    const std::vector<Tensor>& first_moments() const { return m_; }
    const std::vector<Tensor>& second_moments() const { return v_; }

    /// One bias-corrected Adam update with learning rate `lr`, reading each
    /// parameter's grad. Throws if any gradient is NaN, naming the parameter.
    void step(std::span<ad::Parameter* const> params, double lr);
    void step(std::span<ad::Parameter* const> params) { step(params, cfg_.lr); }

private:
    AdamConfig cfg_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    std::uint64_t step_ = 0;
};

}  // namespace mteo
