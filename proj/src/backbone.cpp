// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mteo/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mteo/adam.hpp"
#include "mteo/rng.hpp"

namespace mteo {

void TrainBackboneConfig::validate() const {
    if (n_samples == 0 || batch == 0) throw Error("TrainBackboneConfig: sample and batch counts must be positive");
    if (!(lr > 0.0) || lr_min < 0.0) throw Error("TrainBackboneConfig: lr must be positive");
    if (!(p_uniform >= 0.0 && p_uniform <= 1.0)) throw Error("TrainBackboneConfig: p_uniform must lie in [0, 1]");
    if (!(p_std >= 0.0)) throw Error("TrainBackboneConfig: p_std must be non-negative");
    if (!(sigma_min > 0.0) || !(sigma_max > sigma_min)) throw Error("TrainBackboneConfig: invalid sigma range");
}

namespace {

struct NoisyBatch {
    Tensor noisy;
    Tensor clean;
    std::vector<double> sigma;
};

NoisyBatch make_batch(const Tensor& clean, const TrainBackboneConfig& cfg, Rng& rng) {
    NoisyBatch b{clean, clean, std::vector<double>(clean.rows())};
    for (std::size_t r = 0; r < clean.rows(); ++r) {
        const bool uniform = cfg.p_uniform > 0.0 && rng.uniform() < cfg.p_uniform;
        const double log_sigma = uniform ? std::log(cfg.sigma_min) + rng.uniform() * std::log(cfg.sigma_max / cfg.sigma_min)
                                         : cfg.p_mean + cfg.p_std * rng.normal();
        const double s = std::clamp(std::exp(log_sigma), cfg.sigma_min, cfg.sigma_max);
        b.sigma[r] = s;
        for (std::size_t c = 0; c < clean.cols(); ++c) b.noisy.at(r, c) += s * rng.normal();
    }
    return b;
}

// mean over elements of ((D - x0) / c_out)^2
ad::Var weighted_loss(ad::Tape& tape, const ad::Var& denoised, const NoisyBatch& b, double sigma_data) {
    Tensor w(b.clean.shape());
    for (std::size_t r = 0; r < w.rows(); ++r) {
        const double c_out = precondition(b.sigma[r], sigma_data).c_out;
        for (std::size_t c = 0; c < w.cols(); ++c) w.at(r, c) = 1.0 / c_out;
    }
    const ad::Var err = ad::sub(denoised, tape.constant(b.clean));
    return ad::mean(ad::square(ad::mul(err, tape.constant(std::move(w)))));
}

}  // namespace

double backbone_eval_loss(const Denoiser& net, const GmmSpec& spec, const TrainBackboneConfig& cfg, std::uint64_t seed,
                          std::size_t n) {
    Rng rng(seed, "backbone-eval");
    const Tensor clean = sample_gmm(spec, n, stream_seed(seed, "backbone-eval-data"));
    TrainBackboneConfig eval_cfg = cfg;
    eval_cfg.p_uniform = 0.0;
    const auto b = make_batch(clean, eval_cfg, rng);
    ad::Tape tape;
    const ad::Var d = net.build(tape, tape.constant(b.noisy), b.sigma, {});
    return weighted_loss(tape, d, b, net.config().sigma_data).value().item();
}

Denoiser train_backbone(const GmmSpec& spec, const NetConfig& net_cfg, const TrainBackboneConfig& cfg,
                        BackboneReport* report) {
    cfg.validate();
    spec.validate();
    Denoiser net(net_cfg, stream_seed(cfg.seed, "backbone-weights"));
    const Tensor data = sample_gmm(spec, cfg.n_samples, stream_seed(cfg.seed, "backbone-data"));
    BackboneReport rep;
    rep.initial_loss = backbone_eval_loss(net, spec, cfg, cfg.seed);

    auto params = net.parameters();
    AdamState adam(params, AdamConfig{cfg.lr});
    Rng rng(cfg.seed, "backbone-train");
    std::vector<std::size_t> order(cfg.n_samples);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t batches = (cfg.n_samples + cfg.batch - 1) / cfg.batch;
    const double total_iters = static_cast<double>(std::max<std::size_t>(1, cfg.epochs * batches));
    std::size_t iter = 0;
    ad::Tape tape;
    const std::size_t dim = data.cols();

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng.engine());
        double epoch_loss = 0.0;
        for (std::size_t bi = 0; bi < batches; ++bi) {
            const std::size_t lo = bi * cfg.batch;
            const std::size_t n = std::min(cfg.batch, cfg.n_samples - lo);
            Tensor clean({n, dim});
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < dim; ++c) clean.at(r, c) = data.at(order[lo + r], c);
            const auto b = make_batch(clean, cfg, rng);

            tape.clear();
            for (auto* p : params) p->zero_grad();
            const ad::Var d = net.build_trainable(tape, tape.constant(b.noisy), b.sigma);
            const ad::Var loss = weighted_loss(tape, d, b, net_cfg.sigma_data);
            const double lv = loss.value().item();
            if (!std::isfinite(lv)) throw Error("train_backbone: loss diverged at epoch " + std::to_string(epoch));
            tape.backward(loss);
            // cosine decay from lr to lr_min over all iterations
            const double frac = static_cast<double>(iter) / total_iters;
            const double lr = cfg.lr_min + 0.5 * (cfg.lr - cfg.lr_min) * (1.0 + std::cos(3.141592653589793 * frac));
            adam.step(params, lr);
            epoch_loss += lv;
            ++iter;
        }
        rep.epoch_loss.push_back(epoch_loss / static_cast<double>(batches));
    }
    rep.final_loss = backbone_eval_loss(net, spec, cfg, cfg.seed);
    if (report) *report = std::move(rep);
    return net;
}

}  // namespace mteo
