// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mteo/bank.hpp"

#include <cstring>
#include "mteo/io.hpp"
#include "mteo/rng.hpp"

namespace mteo {

std::string to_string(BankVariant v) {
    switch (v) {
        case BankVariant::multi_layer: return "multi-layer";
        case BankVariant::single: return "single";
        case BankVariant::deep: return "deep";
    }
    return "unknown";
}

BankVariant parse_bank_variant(const std::string& s) {
    if (s == "multi-layer" || s == "multi_layer" || s == "multi") return BankVariant::multi_layer;
    if (s == "single") return BankVariant::single;
    if (s == "deep") return BankVariant::deep;
    throw Error("unknown bank variant '" + s + "'");
}

std::size_t EmbeddingBank::parameter_count() const {
    std::size_t n = 0;
    for (const auto& step : steps)
        for (const auto& p : step) n += p.value.numel();
    return n;
}

std::vector<LayerInput> EmbeddingBank::inputs(ad::Tape& tape, std::size_t step, bool trainable) {
    if (step >= steps.size()) throw Error("bank: step " + std::to_string(step) + " out of range");
    auto& ps = steps[step];
    auto bind = [&](ad::Parameter& p) { return trainable ? tape.param(p) : tape.constant(p.value); };
    std::vector<LayerInput> out(n_layers);
    switch (variant) {
        case BankVariant::multi_layer:
            for (std::size_t l = 0; l < n_layers; ++l) out[l].embedding = bind(ps[l]);
            break;
        case BankVariant::single: {
            const ad::Var shared = bind(ps[0]);
            for (auto& in : out) in.embedding = shared;
            break;
        }
        case BankVariant::deep:
            for (std::size_t l = 0; l < n_layers; ++l) {
                out[l].alpha = bind(ps[2 * l]);
                out[l].beta = bind(ps[2 * l + 1]);
            }
            break;
    }
    return out;
}

std::vector<LayerInput> EmbeddingBank::inputs(ad::Tape& tape, std::size_t step) const {
    return const_cast<EmbeddingBank*>(this)->inputs(tape, step, false);
}

std::vector<ad::Parameter*> EmbeddingBank::step_parameters(std::size_t step) {
    std::vector<ad::Parameter*> out;
    for (auto& p : steps.at(step)) out.push_back(&p);
    return out;
}

std::uint64_t EmbeddingBank::step_checksum(std::size_t step) const {
    std::uint64_t h = fnv1a("bank-step");
    for (const auto& p : steps.at(step))
        for (double v : p.value.data()) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof bits);
            h = splitmix64(h ^ bits);
        }
    return h;
}

void EmbeddingBank::check_compatible(const Schedule& schedule, const Denoiser& backbone) const {
    if (steps.size() != schedule.intervals())
        throw Error("bank: has " + std::to_string(steps.size()) + " steps but schedule has " +
                    std::to_string(schedule.intervals()) + " intervals");
    if (schedule_fingerprint != schedule.fingerprint())
        throw Error("bank: schedule fingerprint mismatch (bank " + hex64(schedule_fingerprint) + ", schedule " +
                    hex64(schedule.fingerprint()) + ")");
    if (backbone_fingerprint != backbone.digest())
        throw Error("bank: backbone fingerprint mismatch (bank " + hex64(backbone_fingerprint) + ", backbone " +
                    hex64(backbone.digest()) + ")");
    if (n_layers != backbone.n_layers()) throw Error("bank: layer count does not match backbone");
}

EmbeddingBank init_bank(const Denoiser& denoiser, const Schedule& schedule, BankVariant variant) {
    validate(schedule);
    EmbeddingBank bank;
    bank.variant = variant;
    bank.n_layers = denoiser.n_layers();
    bank.embed_dim = denoiser.config().embed_dim;
    bank.hidden = denoiser.config().hidden;
    bank.schedule_fingerprint = schedule.fingerprint();
    bank.backbone_fingerprint = denoiser.digest();
    bank.steps.resize(schedule.intervals());
    for (std::size_t i = 0; i < schedule.intervals(); ++i) {
        const Tensor e = denoiser.embed_time(schedule[i]);
        auto& step = bank.steps[i];
        const std::string prefix = "step" + std::to_string(i) + ".";
        switch (variant) {
            case BankVariant::multi_layer:
                for (std::size_t l = 0; l < bank.n_layers; ++l)
                    step.emplace_back(prefix + "layer" + std::to_string(l), e);
                break;
            case BankVariant::single:
                step.emplace_back(prefix + "shared", e);
                break;
            case BankVariant::deep:
                for (std::size_t l = 0; l < bank.n_layers; ++l) {
                    auto fp = denoiser.film_params(l, e);
                    step.emplace_back(prefix + "layer" + std::to_string(l) + ".alpha", std::move(fp.alpha));
                    step.emplace_back(prefix + "layer" + std::to_string(l) + ".beta", std::move(fp.beta));
                }
                break;
        }
    }
    return bank;
}

}  // namespace mteo
