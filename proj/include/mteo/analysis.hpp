// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "mteo/bank.hpp"
#include "mteo/denoiser.hpp"
#include "mteo/gmm.hpp"
#include "mteo/schedule.hpp"
#include "mteo/solvers.hpp"
#include "mteo/teacher.hpp"

namespace mteo {

/// The dense 121-point polynomial (rho = 7) grid over [0.002, 80].
std::vector<double> default_sweep_grid();

struct SweepResult {
    std::size_t step = 0;
    double t_cur = 0.0;
    double t_next = 0.0;
    std::vector<double> grid;
    std::vector<double> distance;      // mean over seeds, per grid point
    std::size_t argmin = 0;
    double tau_star = 0.0;
    bool interior = false;             // tau_star in (t_next, t_cur)
    std::vector<double> seed_tau_star; // per-seed argmin

    /// |tau* - t_cur| / (t_cur - t_next)
    double normalized_offset() const { return std::abs(tau_star - t_cur) / (t_cur - t_next); }
};

/// One Euler step over (t_cur -> t_next) from the teacher state at t_cur, with
/// every layer conditioned on e(tau) instead of e(t_cur).
SweepResult time_sweep(const Denoiser& net, const TeacherSet& teachers, std::size_t step,
                       const std::vector<double>& grid);

/// Reference feature for the layer sweep: the mean over the dense teacher's
/// evaluations inside interval `step` of the post-FiLM features of `layer`.
/// Row r belongs to teacher seed r. One tensor per layer.
std::vector<Tensor> teacher_interval_features(const Denoiser& net, const TeacherSet& teachers, std::size_t step);

/// As time_sweep, but measured on the post-FiLM feature of `layer` (only that
/// layer is conditioned on e(tau); the others stay at e(t_cur)).
SweepResult layer_time_sweep(const Denoiser& net, const TeacherSet& teachers, std::size_t step, std::size_t layer,
                             const std::vector<double>& grid);
std::vector<SweepResult> layer_time_sweeps(const Denoiser& net, const TeacherSet& teachers, std::size_t step,
                                           const std::vector<double>& grid);

struct PcaResult {
    std::size_t n_components = 0;
    std::vector<double> eigenvalues;  // descending
    std::vector<double> ratios;
    std::vector<double> cumulative;

    /// Smallest number of leading components whose cumulative ratio reaches `level`.
    std::size_t components_for(double level) const;
};

/// PCA of the rows of `points` (one point per row).
PcaResult pca(const Tensor& points);

/// Per-layer PCA of pre-FiLM features along a trajectory. At each time point the
/// batch features are flattened into one vector.
std::vector<PcaResult> feature_trajectory_pca(const Denoiser& net, const Trajectory& traj);

struct FilmFit {
    double pre_l1 = 0.0;
    double post_l1 = 0.0;
    FilmParams fitted;
};

struct FilmCapacityOptions {
    std::size_t iterations = 300;
    double lr = 1e-2;
};

/// Fits (alpha, beta) so that film(student_pre, alpha, beta) matches `teacher_mod` in
/// mean absolute error. pre_l1 is measured at `init`.
FilmFit film_capacity(const Tensor& teacher_mod, const Tensor& student_pre, const FilmParams& init,
                      const FilmCapacityOptions& opt = {});

struct FilmProbeRow {
    double tau = 0.0;
    std::size_t layer = 0;
    double pre_l1 = 0.0;
    double post_l1 = 0.0;
};

/// Runs film_capacity for every grid tau strictly inside interval `step` and every layer.
/// Teacher states at tau are integrated from the teacher state at t_cur with `substeps` iPNDM steps.
std::vector<FilmProbeRow> film_probe(const Denoiser& net, const TeacherSet& teachers, std::size_t step,
                                     const std::vector<double>& grid, std::size_t substeps = 10,
                                     const FilmCapacityOptions& opt = {});

/// Batch state at time `tau` reached from `x` at `t_from` by `substeps` iPNDM steps.
Tensor integrate_to(const DenoiserModel& model, const Tensor& x, double t_from, double tau, std::size_t substeps);

struct EmbeddingPca {
    PcaResult vanilla_embedding;  // e(t) over the 121-point grid
    PcaResult mte_embedding;      // every bank vector
    PcaResult vanilla_film;       // (alpha, beta) = affine_l(e(t)), per time and layer
    PcaResult mte_film;           // affine_l(phi_{i,l}), per step and layer
    bool has_bank = false;
};

EmbeddingPca embedding_pca(const Denoiser& net, const EmbeddingBank* bank, const std::vector<double>& grid);

/// Sample-quality metric m evaluated on the final state of a run.
using Metric = std::function<double(const Tensor& endpoints)>;

/// Energy distance to `n_ref` exact draws of `spec`.
Metric energy_metric(const GmmSpec& spec, std::size_t n_ref, std::uint64_t seed);

struct EvalSetup {
    SolverKind kind = SolverKind::ddim;
    Schedule schedule;
    std::uint64_t global_seed = 0;
    std::uint64_t seed_lo = 1000000;
    std::size_t n_samples = 4000;
};

/// Metric of a run with the bank enabled on `mask` (empty bank pointer: vanilla).
double evaluate(const DenoiserModel& net, const EmbeddingBank* bank, const std::vector<bool>& mask,
                const EvalSetup& setup, const Metric& metric);

struct GainDropResult {
    std::vector<std::size_t> subset;
    double m_empty = 0.0;
    double m_subset = 0.0;      // MTE enabled only on T
    double m_complement = 0.0;  // MTE enabled on every step but T
    double m_full = 0.0;
    double gain = 0.0;          // m_empty - m_subset
    double drop = 0.0;          // m_complement - m_full
};

std::vector<GainDropResult> gain_drop(const DenoiserModel& net, const EmbeddingBank& bank, const EvalSetup& setup,
                                      const std::vector<std::vector<std::size_t>>& subsets, const Metric& metric);

struct TransferResult {
    std::size_t k = 1;
    double with_bank = 0.0;
    double vanilla = 0.0;
};

/// Evaluates a bank trained on `setup.schedule` on its k-fold refinement, applying
/// bank step i at the refined interval that starts at student time i.
TransferResult step_transfer(const DenoiserModel& net, const EmbeddingBank& bank, const EvalSetup& setup,
                             std::size_t k, const Metric& metric);

}  // namespace mteo
