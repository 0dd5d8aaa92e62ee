// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mteo/bank.hpp"
#include "mteo/solvers.hpp"
#include "mteo/teacher.hpp"

namespace mteo {

enum class PrevMode { rolling, frozen_initial };
enum class StopReason { threshold, budget, forced_full };

std::string to_string(PrevMode m);
PrevMode parse_prev_mode(const std::string& s);
std::string to_string(StopReason r);

struct MteoConfig {
    double lr = 2e-2;
    double lr_min = 1e-3;
    double eps = 1e-2;
    double eps_min = 1e-3;
    std::size_t patience = 10;
    std::size_t e_max = 300;
    std::size_t batch = 64;
    PrevMode prev_mode = PrevMode::rolling;
    std::uint64_t seed = 0;

    void validate() const;
    /// Geometric tightening eps_i = eps * (eps_min / eps)^(i / (intervals - 1)).
    double eps_at(std::size_t step, std::size_t intervals) const;
    /// Linear decay from lr to lr_min over e_max epochs.
    double lr_at(std::size_t epoch) const;
};

struct StepReport {
    std::vector<double> epoch_loss;  // mean mini-batch loss per epoch
    std::size_t epochs = 0;
    StopReason reason = StopReason::budget;
    double eps = 0.0;
    double initial_loss = 0.0;  // full-batch loss before training this step
    double final_loss = 0.0;    // full-batch loss with the finalized step
};

struct TrainReport {
    std::vector<StepReport> steps;
    double wall_seconds = 0.0;
};

/// Per-step mean squared distance ||x_{i+1} - xhat_{i+1}||^2 when every step
/// starts from the student's own rollout (bank applied where present).
std::vector<double> per_step_loss(const EmbeddingBank* bank, const TeacherSet& teachers, const DenoiserModel& model,
                                  SolverKind kind);

/// Stage-wise trajectory distillation of `bank` against `teachers`.
/// Called after step i is finalized.
using StepHook = std::function<void(std::size_t step, const EmbeddingBank& bank)>;

TrainReport train(EmbeddingBank& bank, const TeacherSet& teachers, const Denoiser& denoiser, SolverKind kind,
                  const MteoConfig& cfg, const StepHook& hook = {});

/// Fresh bank of one variant, trained with train().
EmbeddingBank train_single(const TeacherSet& teachers, const Denoiser& denoiser, SolverKind kind,
                           const MteoConfig& cfg, TrainReport* report = nullptr);
EmbeddingBank train_deep(const TeacherSet& teachers, const Denoiser& denoiser, SolverKind kind,
                         const MteoConfig& cfg, TrainReport* report = nullptr);
EmbeddingBank train_multi_layer(const TeacherSet& teachers, const Denoiser& denoiser, SolverKind kind,
                                const MteoConfig& cfg, TrainReport* report = nullptr);

}  // namespace mteo
