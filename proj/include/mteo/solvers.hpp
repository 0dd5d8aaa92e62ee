// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include "mteo/autodiff.hpp"
#include "mteo/bank.hpp"
#include "mteo/denoiser.hpp"
#include "mteo/schedule.hpp"

namespace mteo {

enum class SolverKind { ddim, ipndm, dpmpp3m };

std::string to_string(SolverKind k);
SolverKind parse_solver_kind(const std::string& s);
std::size_t max_order(SolverKind k);

/// Multistep memory. Entries are plain values, i.e. detached from any tape.
struct SolverState {
    std::deque<Tensor> history;   // most recent first: derivatives (ipndm) or D values (dpmpp3m)
    std::deque<double> lambdas;   // dpmpp3m: log-SNR of each history entry, most recent first
    std::size_t steps = 0;
    std::size_t nfe = 0;
};

/// Euler step of dx/dt = (x - D(x, t)) / t.
ad::Var ddim_step(ad::Tape& tape, const ad::Var& x, double t_cur, double t_next, const DenoiserModel& model,
                  std::span<const LayerInput> ov, SolverState& state);

/// Improved PNDM: Adams-Bashforth on the ODE derivative with order warm-up 1..4.
ad::Var ipndm_step(ad::Tape& tape, const ad::Var& x, double t_cur, double t_next, const DenoiserModel& model,
                   std::span<const LayerInput> ov, SolverState& state);

/// DPM-Solver++(3M): multistep data-prediction update in lambda = -ln t.
ad::Var dpmpp3m_step(ad::Tape& tape, const ad::Var& x, double t_cur, double t_next, const DenoiserModel& model,
                     std::span<const LayerInput> ov, SolverState& state);

ad::Var solver_step(SolverKind kind, ad::Tape& tape, const ad::Var& x, double t_cur, double t_next,
                    const DenoiserModel& model, std::span<const LayerInput> ov, SolverState& state);

struct Trajectory {
    Schedule schedule;
    std::vector<Tensor> states;  // states[i] is the batch at schedule[i]
    SolverKind solver = SolverKind::ddim;
    std::uint64_t seed = 0;
    std::string overrides = "none";
    std::size_t nfe = 0;

    const Tensor& final_state() const { return states.back(); }
};

/// x_T = t_0 * N(0, I), one row per trajectory seed.
Tensor initial_state(std::uint64_t global_seed, std::uint64_t seed_lo, std::size_t count, double t0,
                     std::size_t dim = 2);

struct SampleOptions {
    const EmbeddingBank* bank = nullptr;
    /// Steps at which the bank is applied; empty means every step.
    std::vector<bool> mask;
    /// Optional per-step override, indexed by schedule interval (used by step transfer).
    std::vector<const LayerOverride*> step_overrides;
    /// Optional interval -> bank step map (kNoBankStep for vanilla); lets a bank
    /// trained on a coarse schedule drive a refined one.
    std::vector<std::size_t> bank_map;
    static constexpr std::size_t kNoBankStep = static_cast<std::size_t>(-1);
};

Trajectory sample(SolverKind kind, const Schedule& schedule, const DenoiserModel& model, const Tensor& x_T,
                  const SampleOptions& opts = {});

}  // namespace mteo
