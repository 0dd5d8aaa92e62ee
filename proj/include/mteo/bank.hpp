// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mteo/autodiff.hpp"
#include "mteo/denoiser.hpp"
#include "mteo/schedule.hpp"

namespace mteo {

enum class BankVariant { multi_layer, single, deep };

std::string to_string(BankVariant v);
BankVariant parse_bank_variant(const std::string& s);

/// Learnable per-step time conditioning. Step i holds
///   multi_layer: L embeddings [1 x d];  single: one embedding [1 x d];
///   deep: L (alpha, beta) pairs, stored alpha_0, beta_0, alpha_1, ... [1 x hidden].
struct EmbeddingBank {
    BankVariant variant = BankVariant::multi_layer;
    std::size_t n_layers = 0;
    std::size_t embed_dim = 0;
    std::size_t hidden = 0;
    std::vector<std::vector<ad::Parameter>> steps;
    std::uint64_t schedule_fingerprint = 0;
    std::uint64_t backbone_fingerprint = 0;

    std::size_t n_steps() const { return steps.size(); }
    std::size_t parameter_count() const;

    /// Conditioning inputs for step i. With `trainable`, entries are tape
    /// parameters that receive gradients; otherwise constants.
    std::vector<LayerInput> inputs(ad::Tape& tape, std::size_t step, bool trainable);
    std::vector<LayerInput> inputs(ad::Tape& tape, std::size_t step) const;

    std::vector<ad::Parameter*> step_parameters(std::size_t step);
    /// Hash of every value of one step.
    std::uint64_t step_checksum(std::size_t step) const;

    /// Throws unless the fingerprints and step count agree with the given artifacts.
    void check_compatible(const Schedule& schedule, const Denoiser& backbone) const;
};

/// Bank whose every entry reproduces the vanilla conditioning e(t_i) exactly.
EmbeddingBank init_bank(const Denoiser& denoiser, const Schedule& schedule, BankVariant variant);

}  // namespace mteo
