// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mteo/solvers.hpp"

#include <cmath>

#include "mteo/rng.hpp"

namespace mteo {

std::string to_string(SolverKind k) {
    switch (k) {
        case SolverKind::ddim: return "ddim";
        case SolverKind::ipndm: return "ipndm";
        case SolverKind::dpmpp3m: return "dpmpp3m";
    }
    return "unknown";
}

SolverKind parse_solver_kind(const std::string& s) {
    if (s == "ddim" || s == "euler") return SolverKind::ddim;
    if (s == "ipndm") return SolverKind::ipndm;
    if (s == "dpmpp3m" || s == "dpm++3m" || s == "dpmpp") return SolverKind::dpmpp3m;
    throw Error("unknown solver kind '" + s + "'");
}

std::size_t max_order(SolverKind k) {
    switch (k) {
        case SolverKind::ddim: return 1;
        case SolverKind::ipndm: return 4;
        case SolverKind::dpmpp3m: return 3;
    }
    return 1;
}

namespace {

void check_times(double t_cur, double t_next) {
    if (!(t_cur > t_next) || !(t_next > 0.0))
        throw Error("solver step: need t_cur > t_next > 0, got t_cur=" + std::to_string(t_cur) +
                    ", t_next=" + std::to_string(t_next));
}

// sum_j w_j * v_j for detached tensors, as a single constant.
Tensor combine(std::span<const double> w, std::span<const Tensor* const> v) {
    Tensor out(v[0]->shape(), 0.0);
    auto o = out.data();
    for (std::size_t j = 0; j < w.size(); ++j) {
        auto s = v[j]->data();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] += w[j] * s[i];
    }
    return out;
}

ad::Var scalar_row(ad::Tape& tape, double v, std::size_t cols) { return tape.constant(Tensor({1, cols}, v)); }

}  // namespace

ad::Var ddim_step(ad::Tape& tape, const ad::Var& x, double t_cur, double t_next, const DenoiserModel& model,
                  std::span<const LayerInput> ov, SolverState& state) {
    check_times(t_cur, t_next);
    const ad::Var d = model.denoise(tape, x, t_cur, ov);
    ++state.nfe;
    ++state.steps;
    const std::size_t cols = x.value().cols();
    const ad::Var deriv = ad::mul(ad::sub(x, d), scalar_row(tape, 1.0 / t_cur, cols));
    return ad::add(x, ad::mul(deriv, scalar_row(tape, t_next - t_cur, cols)));
}

ad::Var ipndm_step(ad::Tape& tape, const ad::Var& x, double t_cur, double t_next, const DenoiserModel& model,
                   std::span<const LayerInput> ov, SolverState& state) {
    check_times(t_cur, t_next);
    const ad::Var d = model.denoise(tape, x, t_cur, ov);
    ++state.nfe;
    const std::size_t cols = x.value().cols();
    const ad::Var deriv = ad::mul(ad::sub(x, d), scalar_row(tape, 1.0 / t_cur, cols));

    const std::size_t order = std::min<std::size_t>(state.history.size() + 1, 4);
    static constexpr double kWeights[4][4] = {
        {1.0, 0.0, 0.0, 0.0},
        {3.0 / 2.0, -1.0 / 2.0, 0.0, 0.0},
        {23.0 / 12.0, -16.0 / 12.0, 5.0 / 12.0, 0.0},
        {55.0 / 24.0, -59.0 / 24.0, 37.0 / 24.0, -9.0 / 24.0},
    };
    const double* w = kWeights[order - 1];
    ad::Var slope = order == 1 ? deriv : ad::mul(deriv, scalar_row(tape, w[0], cols));
    if (order > 1) {
        std::vector<const Tensor*> past;
        for (std::size_t j = 1; j < order; ++j) past.push_back(&state.history[j - 1]);
        slope = ad::add(slope, tape.constant(combine(std::span<const double>(w + 1, order - 1), past)));
    }
    const ad::Var x_next = ad::add(x, ad::mul(slope, scalar_row(tape, t_next - t_cur, cols)));

    state.history.push_front(deriv.value());
    while (state.history.size() > 3) state.history.pop_back();
    ++state.steps;
    return x_next;
}

ad::Var dpmpp3m_step(ad::Tape& tape, const ad::Var& x, double t_cur, double t_next, const DenoiserModel& model,
                     std::span<const LayerInput> ov, SolverState& state) {
    check_times(t_cur, t_next);
    const ad::Var d = model.denoise(tape, x, t_cur, ov);
    ++state.nfe;
    const std::size_t cols = x.value().cols();

    const double lam_cur = -std::log(t_cur);
    const double lam_next = -std::log(t_next);
    const double h = lam_next - lam_cur;
    const double phi1 = std::expm1(-h);  // t_next / t_cur - 1
    const std::size_t order = std::min<std::size_t>(state.history.size() + 1, 3);

    // x_next = (t_next/t_cur) x - phi1 * D + correction(history)
    ad::Var x_next = ad::add(ad::mul(x, scalar_row(tape, t_next / t_cur, cols)), ad::mul(d, scalar_row(tape, -phi1, cols)));
    if (order == 2) {
        const double r0 = (lam_cur - state.lambdas[0]) / h;
        // -0.5 * phi1 * (D - D_prev) / r0
        const double c = -0.5 * phi1 / r0;
        x_next = ad::add(x_next, ad::mul(ad::sub(d, tape.constant(state.history[0])), scalar_row(tape, c, cols)));
    } else if (order == 3) {
        const double h0 = lam_cur - state.lambdas[0];
        const double h1 = state.lambdas[0] - state.lambdas[1];
        const double r0 = h0 / h, r1 = h1 / h;
        const double phi2 = phi1 / h + 1.0;
        const double phi3 = phi2 / h - 0.5;
        // D1_0 = (D - m1)/r0, D1_1 = (m1 - m2)/r1
        // D1 = D1_0 + r0/(r0+r1) (D1_0 - D1_1), D2 = (D1_0 - D1_1)/(r0+r1)
        // x_next += phi2 * D1 - phi3 * D2
        const Tensor& m1 = state.history[0];
        const Tensor& m2 = state.history[1];
        const double a = phi2 * (1.0 + r0 / (r0 + r1)) - phi3 / (r0 + r1);  // coefficient of D1_0
        const double b = -phi2 * r0 / (r0 + r1) + phi3 / (r0 + r1);          // coefficient of D1_1
        // D1_0 = D/r0 - m1/r0 ; D1_1 = (m1 - m2)/r1
        Tensor hist(m1.shape(), 0.0);
        for (std::size_t i = 0; i < hist.numel(); ++i) hist[i] = -a * m1[i] / r0 + b * (m1[i] - m2[i]) / r1;
        x_next = ad::add(ad::add(x_next, ad::mul(d, scalar_row(tape, a / r0, cols))), tape.constant(std::move(hist)));
    }

    state.history.push_front(d.value());
    state.lambdas.push_front(lam_cur);
    while (state.history.size() > 2) {
        state.history.pop_back();
        state.lambdas.pop_back();
    }
    ++state.steps;
    return x_next;
}

ad::Var solver_step(SolverKind kind, ad::Tape& tape, const ad::Var& x, double t_cur, double t_next,
                    const DenoiserModel& model, std::span<const LayerInput> ov, SolverState& state) {
    switch (kind) {
        case SolverKind::ddim: return ddim_step(tape, x, t_cur, t_next, model, ov, state);
        case SolverKind::ipndm: return ipndm_step(tape, x, t_cur, t_next, model, ov, state);
        case SolverKind::dpmpp3m: return dpmpp3m_step(tape, x, t_cur, t_next, model, ov, state);
    }
    throw Error("solver_step: invalid solver kind");
}

Tensor initial_state(std::uint64_t global_seed, std::uint64_t seed_lo, std::size_t count, double t0, std::size_t dim) {
    if (count == 0) throw Error("initial_state: need at least one trajectory");
    Tensor x({count, dim});
    for (std::size_t r = 0; r < count; ++r) {
        Rng rng(global_seed, "latent", seed_lo + r);
        for (std::size_t c = 0; c < dim; ++c) x.at(r, c) = t0 * rng.normal();
    }
    return x;
}

Trajectory sample(SolverKind kind, const Schedule& schedule, const DenoiserModel& model, const Tensor& x_T,
                  const SampleOptions& opts) {
    validate(schedule);
    if (!opts.bank_map.empty()) {
        if (!opts.bank) throw Error("sample: bank_map given without a bank");
        if (opts.bank_map.size() != schedule.intervals())
            throw Error("sample: bank_map length does not match schedule intervals");
        for (auto j : opts.bank_map)
            if (j != SampleOptions::kNoBankStep && j >= opts.bank->n_steps())
                throw Error("sample: bank_map refers to step " + std::to_string(j) + " of a " +
                            std::to_string(opts.bank->n_steps()) + "-step bank");
    } else if (opts.bank && opts.bank->n_steps() != schedule.intervals())
        throw Error("sample: bank has " + std::to_string(opts.bank->n_steps()) + " steps but schedule has " +
                    std::to_string(schedule.intervals()) + " intervals");
    if (!opts.mask.empty() && opts.mask.size() != schedule.intervals())
        throw Error("sample: step mask length does not match schedule intervals");
    if (!opts.step_overrides.empty() && opts.step_overrides.size() != schedule.intervals())
        throw Error("sample: step override list length does not match schedule intervals");

    Trajectory traj;
    traj.schedule = schedule;
    traj.solver = kind;
    traj.overrides = opts.bank ? "bank:" + to_string(opts.bank->variant) : "none";
    traj.states.reserve(schedule.size());
    traj.states.push_back(x_T);

    SolverState state;
    ad::Tape tape;
    const auto* den = dynamic_cast<const Denoiser*>(&model);
    for (std::size_t i = 0; i < schedule.intervals(); ++i) {
        tape.clear();
        std::vector<LayerInput> ov;
        const std::size_t bank_step = opts.bank_map.empty() ? i : opts.bank_map[i];
        if (opts.bank && bank_step != SampleOptions::kNoBankStep && (opts.mask.empty() || opts.mask[i])) {
            ov = opts.bank->inputs(tape, bank_step);
        } else if (!opts.step_overrides.empty() && opts.step_overrides[i]) {
            if (!den) throw Error("sample: per-step overrides need a FiLM denoiser");
            ov = den->to_inputs(tape, *opts.step_overrides[i]);
        }
        const ad::Var x = tape.constant(traj.states.back());
        const ad::Var x_next = solver_step(kind, tape, x, schedule[i], schedule[i + 1], model, ov, state);
        traj.states.push_back(x_next.value());
    }
    traj.nfe = state.nfe;
    return traj;
}

}  // namespace mteo
