// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mteo/adam.hpp"

#include <cmath>

namespace mteo {

AdamState::AdamState(std::span<ad::Parameter* const> params, AdamConfig cfg) : cfg_(cfg) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto* p : params) {
        m_.emplace_back(p->value.shape(), 0.0);
        v_.emplace_back(p->value.shape(), 0.0);
    }
}

void AdamState::step(std::span<ad::Parameter* const> params, double lr) {
    if (params.size() != m_.size())
        throw Error("adam: expected " + std::to_string(m_.size()) + " parameters, got " +
                    std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto* p = params[i];
        if (p->grad.shape() != p->value.shape() || p->value.shape() != m_[i].shape())
            throw Error("adam: shape mismatch for parameter '" + p->name + "'");
        for (double g : p->grad.data())
            if (std::isnan(g)) throw Error("adam: NaN gradient in parameter '" + p->name + "'");
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto w = params[i]->value.data();
        auto g = params[i]->grad.data();
        auto m = m_[i].data();
        auto v = v_[i].data();
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            w[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace mteo
