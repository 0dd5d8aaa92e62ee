// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mteo/autodiff.hpp"
#include "mteo/denoiser.hpp"
#include "mteo/rng.hpp"
#include "mteo/solvers.hpp"

namespace mteo::testing {

/// A differentiable function of some leaf tensors.
struct GradCase {
    std::string name;
    std::vector<Tensor> inputs;
    std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)> fn;
};

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.5, double hi = 1.5) {
    Tensor t(std::move(shape));
    for (auto& v : t.storage()) v = lo + (hi - lo) * rng.uniform();
    return t;
}

/// Tensor away from zero, for abs.
inline Tensor random_nonzero(Rng& rng, Shape shape) {
    Tensor t = random_tensor(rng, std::move(shape), 0.2, 1.5);
    for (auto& v : t.storage())
        if (rng.uniform() < 0.5) v = -v;
    return t;
}

/// Relative error || g_ad - g_fd || / max(||g_ad||, ||g_fd||) for the scalar
/// projection sum(w * f(inputs)) with fixed random weights w.
inline double gradcheck(const GradCase& c, std::uint64_t seed, double h = 1e-5) {
    Tensor weights;
    auto project = [&](ad::Tape& tape, const ad::Var& out) {
        if (weights.empty()) {
            Rng rng(seed, "gradcheck-weights");
            weights = random_tensor(rng, out.value().shape(), -1.0, 1.0);
        }
        return ad::sum(ad::mul(out, tape.constant(weights)));
    };

    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (const auto& t : c.inputs) leaves.push_back(tape.leaf(t));
    const ad::Var loss = project(tape, c.fn(tape, leaves));
    tape.backward(loss);
    std::vector<Tensor> analytic;
    for (const auto& l : leaves) analytic.push_back(tape.grad(l));

    auto eval = [&](const std::vector<Tensor>& in) {
        ad::Tape t2;
        std::vector<ad::Var> vs;
        for (const auto& x : in) vs.push_back(t2.constant(x));
        return project(t2, c.fn(t2, vs)).value().item();
    };

    double num = 0.0, den_a = 0.0, den_n = 0.0;
    std::vector<Tensor> in = c.inputs;
    for (std::size_t k = 0; k < in.size(); ++k)
        for (std::size_t e = 0; e < in[k].numel(); ++e) {
            const double orig = in[k][e];
            in[k][e] = orig + h;
            const double up = eval(in);
            in[k][e] = orig - h;
            const double down = eval(in);
            in[k][e] = orig;
            const double fd = (up - down) / (2.0 * h);
            const double ga = analytic[k][e];
            num += (ga - fd) * (ga - fd);
            den_a += ga * ga;
            den_n += fd * fd;
        }
    const double den = std::max({std::sqrt(den_a), std::sqrt(den_n), 1e-12});
    return std::sqrt(num) / den;
}

/// Small backbone for fast tests.
inline NetConfig tiny_net() {
    NetConfig c;
    c.n_blocks = 3;
    c.hidden = 12;
    c.embed_dim = 8;
    c.n_fourier = 4;
    return c;
}

/// Randomized primitive and composite cases (shapes up to 8 x 8).
inline std::vector<GradCase> random_cases(std::size_t count, std::uint64_t seed) {
    Rng rng(seed, "gradcheck-cases");
    auto dim = [&] { return static_cast<std::size_t>(1 + rng.below(8)); };
    static const Denoiser net(tiny_net(), 7);
    std::vector<GradCase> out;
    for (std::size_t i = 0; out.size() < count; ++i) {
        const std::size_t r = dim(), c = dim(), k = dim();
        using V = std::vector<ad::Var>;
        using T = ad::Tape;
        switch (i % 22) {
            case 0: out.push_back({"add", {random_tensor(rng, {r, c}), random_tensor(rng, {r, c})},
                                   [](T&, const V& v) { return ad::add(v[0], v[1]); }}); break;
            case 1: out.push_back({"sub_broadcast", {random_tensor(rng, {r, c}), random_tensor(rng, {1, c})},
                                   [](T&, const V& v) { return ad::sub(v[0], v[1]); }}); break;
            case 2: out.push_back({"mul_broadcast", {random_tensor(rng, {1, c}), random_tensor(rng, {r, c})},
                                   [](T&, const V& v) { return ad::mul(v[0], v[1]); }}); break;
            case 3: out.push_back({"matmul", {random_tensor(rng, {r, k}), random_tensor(rng, {k, c})},
                                   [](T&, const V& v) { return ad::matmul(v[0], v[1]); }}); break;
            case 4: out.push_back({"affine", {random_tensor(rng, {r, k}), random_tensor(rng, {k, c}), random_tensor(rng, {1, c})},
                                   [](T&, const V& v) { return ad::affine(v[0], v[1], v[2]); }}); break;
            case 5: out.push_back({"sin", {random_tensor(rng, {r, c})}, [](T&, const V& v) { return ad::sin(v[0]); }}); break;
            case 6: out.push_back({"cos", {random_tensor(rng, {r, c})}, [](T&, const V& v) { return ad::cos(v[0]); }}); break;
            case 7: out.push_back({"exp", {random_tensor(rng, {r, c})}, [](T&, const V& v) { return ad::exp(v[0]); }}); break;
            case 8: out.push_back({"log", {random_tensor(rng, {r, c}, 0.3, 3.0)}, [](T&, const V& v) { return ad::log(v[0]); }}); break;
            case 9: out.push_back({"silu", {random_tensor(rng, {r, c}, -4.0, 4.0)}, [](T&, const V& v) { return ad::silu(v[0]); }}); break;
            case 10: out.push_back({"square", {random_tensor(rng, {r, c})}, [](T&, const V& v) { return ad::square(v[0]); }}); break;
            case 11: out.push_back({"abs", {random_nonzero(rng, {r, c})}, [](T&, const V& v) { return ad::abs(v[0]); }}); break;
            case 12: out.push_back({"sum", {random_tensor(rng, {r, c})}, [](T&, const V& v) { return ad::sum(v[0]); }}); break;
            case 13: out.push_back({"mean", {random_tensor(rng, {r, c})}, [](T&, const V& v) { return ad::mean(v[0]); }}); break;
            case 14: out.push_back({"concat_cols", {random_tensor(rng, {r, c}), random_tensor(rng, {r, k})},
                                    [](T&, const V& v) { return ad::concat(v, 1); }}); break;
            case 15: out.push_back({"concat_rows", {random_tensor(rng, {r, c}), random_tensor(rng, {k, c})},
                                    [](T&, const V& v) { return ad::concat(v, 0); }}); break;
            case 16: {
                const std::size_t start = static_cast<std::size_t>(rng.below(c));
                const std::size_t len = 1 + static_cast<std::size_t>(rng.below(c - start));
                out.push_back({"slice", {random_tensor(rng, {r, c})},
                               [start, len](T&, const V& v) { return ad::slice(v[0], 1, start, len); }});
                break;
            }
            case 17: out.push_back({"mlp", {random_tensor(rng, {r, k}), random_tensor(rng, {k, c}), random_tensor(rng, {1, c})},
                                    [](T&, const V& v) { return ad::silu(ad::affine(v[0], v[1], v[2])); }}); break;
            case 18: out.push_back({"denoiser_embedding_override", {random_tensor(rng, {r, 2}, -3.0, 3.0), random_tensor(rng, {1, 8})},
                                    [](T& t, const V& v) {
                                        std::vector<LayerInput> ov(net.n_layers());
                                        ov[1].embedding = v[1];
                                        return net.denoise(t, v[0], 1.7, ov);
                                    }}); break;
            case 19: out.push_back({"denoiser_film_override", {random_tensor(rng, {r, 2}, -3.0, 3.0), random_tensor(rng, {1, 12}),
                                                               random_tensor(rng, {1, 12})},
                                    [](T& t, const V& v) {
                                        std::vector<LayerInput> ov(net.n_layers());
                                        ov[2].alpha = v[1];
                                        ov[2].beta = v[2];
                                        return net.denoise(t, v[0], 0.4, ov);
                                    }}); break;
            case 20: out.push_back({"time_embedding", {random_tensor(rng, {r, 1}, 0.05, 20.0)},
                                    [](T& t, const V& v) { return net.build_embedding(t, v[0]); }}); break;
            case 21: out.push_back({"ddim_step_override", {random_tensor(rng, {r, 2}, -5.0, 5.0), random_tensor(rng, {1, 8})},
                                    [](T& t, const V& v) {
                                        std::vector<LayerInput> ov(net.n_layers());
                                        for (auto& o : ov) o.embedding = v[1];
                                        SolverState st;
                                        return ddim_step(t, v[0], 5.0, 2.0, net, ov, st);
                                    }}); break;
        }
    }
    return out;
}

}  // namespace mteo::testing
