// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mteo/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "mteo/adam.hpp"
#include "mteo/io.hpp"
#include "mteo/rng.hpp"

namespace mteo {

std::string to_string(PrevMode m) { return m == PrevMode::rolling ? "rolling" : "frozen-initial"; }

PrevMode parse_prev_mode(const std::string& s) {
    if (s == "rolling") return PrevMode::rolling;
    if (s == "frozen-initial" || s == "frozen_initial" || s == "frozen") return PrevMode::frozen_initial;
    throw Error("unknown L_prev mode '" + s + "'");
}

std::string to_string(StopReason r) {
    switch (r) {
        case StopReason::threshold: return "threshold";
        case StopReason::budget: return "budget";
        case StopReason::forced_full: return "forced-full";
    }
    return "unknown";
}

void MteoConfig::validate() const {
    if (!(lr >= 0.0) || !(lr_min >= 0.0)) throw Error("MteoConfig: learning rates must be >= 0");
    if (!(eps_min > 0.0) || !(eps_min <= eps)) throw Error("MteoConfig: need 0 < eps_min <= eps");
    if (patience < 1) throw Error("MteoConfig: patience must be >= 1");
    if (e_max < 1) throw Error("MteoConfig: e_max must be >= 1");
    if (batch < 1) throw Error("MteoConfig: batch must be >= 1");
}

double MteoConfig::eps_at(std::size_t step, std::size_t intervals) const {
    if (intervals <= 1) return eps;
    const double f = static_cast<double>(step) / static_cast<double>(intervals - 1);
    return eps * std::pow(eps_min / eps, f);
}

double MteoConfig::lr_at(std::size_t epoch) const {
    if (e_max <= 1) return lr;
    const double f = static_cast<double>(epoch) / static_cast<double>(e_max - 1);
    return lr + (lr_min - lr) * f;
}

namespace {

SolverState select_rows(const SolverState& s, std::span<const std::size_t> idx) {
    SolverState out;
    out.lambdas = s.lambdas;
    out.steps = s.steps;
    for (const auto& h : s.history) out.history.push_back(gather_rows(h, idx));
    return out;
}

// sum of squared row distances / rows
ad::Var trajectory_loss(ad::Tape& tape, const ad::Var& x_next, const Tensor& target) {
    const ad::Var diff = ad::sub(x_next, tape.constant(target));
    const ad::Var total = ad::sum(ad::square(diff));
    return ad::scale(total, 1.0 / static_cast<double>(target.rows()));
}

// Loss of step i over all rows, plus the advanced state.
double full_step(const EmbeddingBank* bank, std::size_t i, const Tensor& x, SolverState& state,
                 const TeacherSet& teachers, const DenoiserModel& model, SolverKind kind, Tensor* x_next) {
    ad::Tape tape;
    std::vector<LayerInput> ov;
    if (bank) ov = bank->inputs(tape, i);
    const ad::Var xv = tape.constant(x);
    const ad::Var xn = solver_step(kind, tape, xv, teachers.student[i], teachers.student[i + 1], model, ov, state);
    const double loss = trajectory_loss(tape, xn, teachers.states[i + 1]).value().item();
    if (x_next) *x_next = xn.value();
    return loss;
}

}  // namespace

std::vector<double> per_step_loss(const EmbeddingBank* bank, const TeacherSet& teachers, const DenoiserModel& model,
                                  SolverKind kind) {
    teachers.validate();
    if (bank && bank->n_steps() != teachers.student.intervals())
        throw Error("per_step_loss: bank step count does not match the teacher schedule");
    std::vector<double> out;
    Tensor x = teachers.states[0];
    SolverState state;
    for (std::size_t i = 0; i < teachers.student.intervals(); ++i) {
        Tensor next;
        out.push_back(full_step(bank, i, x, state, teachers, model, kind, &next));
        x = std::move(next);
    }
    return out;
}

TrainReport train(EmbeddingBank& bank, const TeacherSet& teachers, const Denoiser& denoiser, SolverKind kind,
                  const MteoConfig& cfg, const StepHook& hook) {
    const auto t_start = std::chrono::steady_clock::now();
    cfg.validate();
    teachers.validate();
    bank.check_compatible(teachers.student, denoiser);
    if (teachers.backbone_fingerprint != 0 && teachers.backbone_fingerprint != bank.backbone_fingerprint)
        throw Error("train: teacher backbone fingerprint " + hex64(teachers.backbone_fingerprint) +
                    " does not match bank backbone " + hex64(bank.backbone_fingerprint));

    const std::size_t n_int = teachers.student.intervals();
    const std::size_t n = teachers.n_seeds();
    TrainReport report;
    Tensor x = teachers.states[0];
    SolverState state;
    std::vector<std::size_t> order(n);

    for (std::size_t i = 0; i < n_int; ++i) {
        StepReport sr;
        sr.eps = cfg.eps_at(i, n_int);
        {
            SolverState probe = state;
            sr.initial_loss = full_step(&bank, i, x, probe, teachers, denoiser, kind, nullptr);
        }
        const bool last = i + 1 == n_int;
        auto params = bank.step_parameters(i);
        AdamState adam(params, AdamConfig{cfg.lr});
        const double t_cur = teachers.student[i];
        const double t_next = teachers.student[i + 1];

        std::size_t c = 0, p = 0;
        double l_prev = 0.0;
        ad::Tape tape;
        while (c < cfg.e_max && (last || p < cfg.patience)) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            Rng rng(cfg.seed, "mteo-shuffle", static_cast<std::uint64_t>(i) * cfg.e_max + c);
            std::shuffle(order.begin(), order.end(), rng.engine());
            const double lr = cfg.lr_at(c);

            double sum = 0.0;
            std::size_t batches = 0;
            for (std::size_t b0 = 0; b0 < n; b0 += cfg.batch) {
                const std::span<const std::size_t> idx(order.data() + b0, std::min(cfg.batch, n - b0));
                tape.clear();
                for (auto* prm : params) prm->zero_grad();
                const auto ov = bank.inputs(tape, i, true);
                SolverState sub = select_rows(state, idx);
                const ad::Var xv = tape.constant(gather_rows(x, idx));
                const ad::Var xn = solver_step(kind, tape, xv, t_cur, t_next, denoiser, ov, sub);
                const ad::Var loss = trajectory_loss(tape, xn, teachers.rows(i + 1, idx));
                const double lv = loss.value().item();
                if (!std::isfinite(lv))
                    throw Error("train: non-finite loss at step " + std::to_string(i) + ", epoch " + std::to_string(c));
                tape.backward(loss);
                adam.step(params, lr);
                sum += lv;
                ++batches;
            }
            const double l_cur = sum / static_cast<double>(batches);
            sr.epoch_loss.push_back(l_cur);

            if (c == 0) {
                l_prev = l_cur;
            } else {
                const double rel = (l_prev - l_cur) / l_prev;
                p = rel < sr.eps ? p + 1 : 0;
                if (cfg.prev_mode == PrevMode::rolling) l_prev = l_cur;
            }
            ++c;
        }
        sr.epochs = c;
        sr.reason = last ? StopReason::forced_full : (p >= cfg.patience ? StopReason::threshold : StopReason::budget);

        Tensor next;
        sr.final_loss = full_step(&bank, i, x, state, teachers, denoiser, kind, &next);
        x = std::move(next);
        report.steps.push_back(std::move(sr));
        if (hook) hook(i, bank);
    }
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return report;
}

namespace {

EmbeddingBank train_variant(BankVariant v, const TeacherSet& teachers, const Denoiser& denoiser, SolverKind kind,
                            const MteoConfig& cfg, TrainReport* report) {
    EmbeddingBank bank = init_bank(denoiser, teachers.student, v);
    TrainReport r = train(bank, teachers, denoiser, kind, cfg);
    if (report) *report = std::move(r);
    return bank;
}

}  // namespace

EmbeddingBank train_single(const TeacherSet& teachers, const Denoiser& denoiser, SolverKind kind,
                           const MteoConfig& cfg, TrainReport* report) {
    return train_variant(BankVariant::single, teachers, denoiser, kind, cfg, report);
}

EmbeddingBank train_deep(const TeacherSet& teachers, const Denoiser& denoiser, SolverKind kind,
                         const MteoConfig& cfg, TrainReport* report) {
    return train_variant(BankVariant::deep, teachers, denoiser, kind, cfg, report);
}

EmbeddingBank train_multi_layer(const TeacherSet& teachers, const Denoiser& denoiser, SolverKind kind,
                                const MteoConfig& cfg, TrainReport* report) {
    return train_variant(BankVariant::multi_layer, teachers, denoiser, kind, cfg, report);
}

}  // namespace mteo
