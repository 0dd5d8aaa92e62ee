// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "mteo/denoiser.hpp"
#include "mteo/gmm.hpp"

namespace mteo {

struct TrainBackboneConfig {
    std::size_t n_samples = 8192;
    std::size_t epochs = 300;
    std::size_t batch = 256;
    double lr = 2e-3;
    double lr_min = 1e-4;
    /// ln(sigma) ~ N(p_mean, p_std^2), clamped to [sigma_min, sigma_max].
    double p_mean = -0.6931471805599453;  // ln 0.5
    double p_std = 1.2;
    /// Fraction of draws taken log-uniform over [sigma_min, sigma_max] instead.
    double p_uniform = 0.5;
    double sigma_min = 0.002;
    double sigma_max = 80.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct BackboneReport {
    std::vector<double> epoch_loss;  // mean weighted loss over each epoch's batches
    double initial_loss = 0.0;       // held-out loss before training
    double final_loss = 0.0;         // held-out loss after training
};

/// EDM-weighted denoising loss of `net` on fixed held-out pairs drawn from `seed`,
/// with noise levels from the log-normal law only.
double backbone_eval_loss(const Denoiser& net, const GmmSpec& spec, const TrainBackboneConfig& cfg,
                          std::uint64_t seed, std::size_t n = 4096);

/// Denoising score matching with EDM weighting. Returns the trained (then frozen) network.
Denoiser train_backbone(const GmmSpec& spec, const NetConfig& net, const TrainBackboneConfig& cfg,
                        BackboneReport* report = nullptr);

}  // namespace mteo
