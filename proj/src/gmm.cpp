// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mteo/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mteo/rng.hpp"

namespace mteo {

GmmSpec GmmSpec::circle(std::size_t k, double radius, double std) {
    GmmSpec s;
    s.std = std;
    for (std::size_t i = 0; i < k; ++i) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(k);
        s.means.push_back({radius * std::cos(a), radius * std::sin(a)});
    }
    s.weights.assign(k, 1.0 / static_cast<double>(k));
    return s;
}

void GmmSpec::validate() const {
    if (means.empty()) throw Error("GmmSpec: needs at least one component");
    if (weights.size() != means.size()) throw Error("GmmSpec: weights and means differ in length");
    if (!(std > 0.0)) throw Error("GmmSpec: component std must be positive");
    double total = 0.0;
    for (double w : weights) {
        if (!(w > 0.0)) throw Error("GmmSpec: weights must be positive");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw Error("GmmSpec: weights must sum to 1");
    for (const auto& m : means)
        if (m.size() != means[0].size() || m.empty()) throw Error("GmmSpec: inconsistent mean dimensions");
}

std::vector<double> GmmSpec::mixture_mean() const {
    std::vector<double> mu(dim(), 0.0);
    for (std::size_t k = 0; k < means.size(); ++k)
        for (std::size_t c = 0; c < mu.size(); ++c) mu[c] += weights[k] * means[k][c];
    return mu;
}

std::vector<double> GmmSpec::mixture_variance() const {
    const auto mu = mixture_mean();
    std::vector<double> var(dim(), std * std);
    for (std::size_t k = 0; k < means.size(); ++k)
        for (std::size_t c = 0; c < var.size(); ++c) var[c] += weights[k] * (means[k][c] - mu[c]) * (means[k][c] - mu[c]);
    return var;
}

Tensor sample_gmm(const GmmSpec& spec, std::size_t n, std::uint64_t seed) {
    spec.validate();
    if (n == 0) throw Error("sample_gmm: n must be positive");
    Rng rng(seed, "gmm");
    std::discrete_distribution<std::size_t> pick(spec.weights.begin(), spec.weights.end());
    const std::size_t dim = spec.dim();
    Tensor out({n, dim});
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t k = pick(rng.engine());
        for (std::size_t c = 0; c < dim; ++c) out.at(r, c) = spec.means[k][c] + spec.std * rng.normal();
    }
    return out;
}

Tensor analytic_denoiser(const GmmSpec& spec, const Tensor& x, double sigma) {
    spec.validate();
    if (!(sigma > 0.0)) throw Error("analytic_denoiser: sigma must be positive");
    const std::size_t dim = spec.dim();
    if (x.cols() != dim) throw Error("analytic_denoiser: state width does not match the mixture dimension");
    const double s2 = spec.std * spec.std;
    const double v = s2 + sigma * sigma;
    const std::size_t K = spec.n_components();
    std::vector<double> logw(K);
    Tensor out(x.shape(), 0.0);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t k = 0; k < K; ++k) {
            double d2 = 0.0;
            for (std::size_t c = 0; c < dim; ++c) {
                const double d = x.at(r, c) - spec.means[k][c];
                d2 += d * d;
            }
            logw[k] = std::log(spec.weights[k]) - 0.5 * d2 / v;
        }
        const double mx = *std::max_element(logw.begin(), logw.end());
        double z = 0.0;
        for (auto& l : logw) {
            l = std::exp(l - mx);
            z += l;
        }
        for (std::size_t c = 0; c < dim; ++c) {
            double acc = 0.0;
            for (std::size_t k = 0; k < K; ++k) acc += logw[k] * (s2 * x.at(r, c) + sigma * sigma * spec.means[k][c]);
            out.at(r, c) = acc / (z * v);
        }
    }
    return out;
}

ad::Var AnalyticModel::denoise(ad::Tape& tape, const ad::Var& x, double t, std::span<const LayerInput>) const {
    return tape.constant(analytic_denoiser(spec_, x.value(), t));
}

}  // namespace mteo
