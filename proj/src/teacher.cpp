// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mteo/teacher.hpp"

#include <algorithm>
#include <cstring>

namespace mteo {

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> idx) {
    if (idx.empty()) throw Error("gather_rows: empty index list");
    const std::size_t cols = t.cols();
    Tensor out({idx.size(), cols});
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= t.rows()) throw Error("gather_rows: row index out of range");
        std::memcpy(out.data().data() + r * cols, t.data().data() + idx[r] * cols, cols * sizeof(double));
    }
    return out;
}

Tensor TeacherSet::rows(std::size_t i, std::span<const std::size_t> idx) const {
    if (i >= states.size()) throw Error("TeacherSet: time index out of range");
    return gather_rows(states[i], idx);
}

TeacherSet TeacherSet::subset(std::uint64_t lo, std::uint64_t hi) const {
    if (lo > hi || lo < seed_lo || hi > seed_hi) throw Error("TeacherSet: seed subset outside the recorded range");
    TeacherSet out = *this;
    out.seed_lo = lo;
    out.seed_hi = hi;
    std::vector<std::size_t> idx(static_cast<std::size_t>(hi - lo + 1));
    for (std::size_t r = 0; r < idx.size(); ++r) idx[r] = static_cast<std::size_t>(lo - seed_lo) + r;
    for (auto& s : out.states) s = gather_rows(s, idx);
    return out;
}

void TeacherSet::validate() const {
    mteo::validate(student);
    if (k < 1) throw Error("TeacherSet: refinement factor must be >= 1");
    if (seed_hi < seed_lo) throw Error("TeacherSet: empty seed range");
    if (states.size() != student.size())
        throw Error("TeacherSet: expected " + std::to_string(student.size()) + " states per seed, found " +
                    std::to_string(states.size()));
    for (const auto& s : states)
        if (s.rows() != n_seeds() || s.cols() != states.front().cols())
            throw Error("TeacherSet: state block shape " + shape_str(s.shape()) + " does not match the seed range");
}

TeacherSet gen_teachers(const DenoiserModel& model, const Schedule& student, std::size_t k, SolverKind kind,
                        std::uint64_t seed_lo, std::uint64_t seed_hi, std::uint64_t global_seed,
                        std::uint64_t backbone_fingerprint) {
    validate(student);
    if (seed_hi < seed_lo) throw Error("gen_teachers: seed_hi < seed_lo");
    const Schedule dense = refine_schedule(student, k);
    TeacherSet set;
    set.student = student;
    set.k = k;
    set.kind = kind;
    set.seed_lo = seed_lo;
    set.seed_hi = seed_hi;
    set.global_seed = global_seed;
    set.backbone_fingerprint = backbone_fingerprint;

    const Tensor x_T = initial_state(global_seed, seed_lo, set.n_seeds(), student[0]);
    const Trajectory traj = sample(kind, dense, model, x_T);
    for (std::size_t i = 0; i < student.size(); ++i) {
        const std::size_t j = find_time(dense, student[i]);
        if (j == dense.size() || j != i * k) throw Error("gen_teachers: refined schedule lost a student time");
        set.states.push_back(traj.states[j]);
    }
    return set;
}

}  // namespace mteo
