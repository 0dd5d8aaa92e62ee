// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mteo/schedule.hpp"
#include "mteo/solvers.hpp"

namespace mteo {

/// Reference states of a dense rollout, kept only at the student times.
struct TeacherSet {
    Schedule student;
    std::size_t k = 1;
    SolverKind kind = SolverKind::ipndm;
    std::uint64_t seed_lo = 0;
    std::uint64_t seed_hi = 0;  // inclusive
    std::uint64_t global_seed = 0;
    std::uint64_t backbone_fingerprint = 0;
    /// states[i] is [n_seeds x dim] at student time i; row r belongs to seed_lo + r.
    std::vector<Tensor> states;

    std::size_t n_seeds() const { return static_cast<std::size_t>(seed_hi - seed_lo + 1); }
    std::size_t dim() const { return states.empty() ? 0 : states.front().cols(); }

    /// Rows `idx` of the states at student time i.
    Tensor rows(std::size_t i, std::span<const std::size_t> idx) const;
    /// The subset of seeds [lo, hi], inclusive.
    TeacherSet subset(std::uint64_t lo, std::uint64_t hi) const;

    void validate() const;
};

/// Gathers rows of a batch tensor.
Tensor gather_rows(const Tensor& t, std::span<const std::size_t> idx);

TeacherSet gen_teachers(const DenoiserModel& model, const Schedule& student, std::size_t k, SolverKind kind,
                        std::uint64_t seed_lo, std::uint64_t seed_hi, std::uint64_t global_seed,
                        std::uint64_t backbone_fingerprint = 0);

}  // namespace mteo
