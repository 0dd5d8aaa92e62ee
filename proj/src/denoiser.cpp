// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mteo/denoiser.hpp"

#include <cmath>
#include <cstring>

#include "mteo/rng.hpp"

namespace mteo {

void NetConfig::validate() const {
    if (data_dim == 0 || n_blocks == 0 || hidden == 0 || embed_dim == 0 || n_fourier == 0)
        throw Error("NetConfig: all sizes must be positive");
    if (embed_dim % 2 != 0) throw Error("NetConfig: embed_dim must be even");
    if (!(sigma_data > 0.0)) throw Error("NetConfig: sigma_data must be positive");
}

Precond precondition(double sigma, double sigma_data) {
    const double s2 = sigma * sigma;
    const double d2 = sigma_data * sigma_data;
    const double root = std::sqrt(s2 + d2);
    return {d2 / (s2 + d2), sigma * sigma_data / root, 1.0 / root, std::log(sigma) / 4.0};
}

Tensor film(const Tensor& features, const FilmParams& params) {
    const std::size_t cols = features.cols();
    if (params.alpha.numel() != cols || params.beta.numel() != cols)
        throw Error("film: feature width " + std::to_string(cols) + " does not match FiLM parameters " +
                    shape_str(params.alpha.shape()) + " / " + shape_str(params.beta.shape()));
    Tensor out(features.shape());
    for (std::size_t r = 0; r < features.rows(); ++r)
        for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = features.at(r, c) * params.alpha[c] + params.beta[c];
    return out;
}

LayerOverride LayerOverride::broadcast(const Tensor& embedding, std::size_t n_layers) {
    LayerOverride ov;
    ov.embeddings.assign(n_layers, embedding);
    return ov;
}

namespace {

Tensor init_weight(Rng& rng, std::size_t fan_in, std::size_t fan_out, double gain) {
    Tensor w({fan_in, fan_out});
    const double std = gain / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : w.data()) v = std * rng.normal();
    return w;
}

void check_sigma(std::span<const double> sigma, std::size_t rows) {
    if (sigma.empty() || (sigma.size() != 1 && sigma.size() != rows))
        throw Error("denoiser: expected 1 or " + std::to_string(rows) + " noise levels, got " +
                    std::to_string(sigma.size()));
    for (double s : sigma)
        if (!(s > 0.0) || !std::isfinite(s)) throw Error("denoiser: noise level must be positive and finite");
}

}  // namespace

Denoiser::Denoiser(const NetConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(init_seed, "denoiser-init");
    const std::size_t H = cfg_.hidden, d = cfg_.embed_dim, D = cfg_.data_dim, nf = cfg_.n_fourier;

    // Inverse wavelengths log-spaced over [1, 1000].
    freqs_.resize(nf);
    for (std::size_t k = 0; k < nf; ++k)
        freqs_[k] = nf == 1 ? 1.0 : std::pow(1000.0, -static_cast<double>(k) / static_cast<double>(nf - 1));

    proj_w_ = {"proj.w", init_weight(rng, D, H, 1.0)};
    proj_b_ = {"proj.b", Tensor({1, H}, 0.0)};
    emb1_w_ = {"emb1.w", init_weight(rng, 2 * nf, d, 1.0)};
    emb1_b_ = {"emb1.b", Tensor({1, d}, 0.0)};
    emb2_w_ = {"emb2.w", init_weight(rng, d, d, 1.0)};
    emb2_b_ = {"emb2.b", Tensor({1, d}, 0.0)};
    blocks_.resize(cfg_.n_blocks);
    for (std::size_t l = 0; l < cfg_.n_blocks; ++l) {
        auto& b = blocks_[l];
        const std::string prefix = "block" + std::to_string(l) + ".";
        b.in_w = {prefix + "in.w", init_weight(rng, H, H, 1.0)};
        b.in_b = {prefix + "in.b", Tensor({1, H}, 0.0)};
        b.film_w = {prefix + "film.w", init_weight(rng, d, 2 * H, 0.5)};
        Tensor fb({1, 2 * H}, 0.0);
        for (std::size_t c = 0; c < H; ++c) fb[c] = 1.0;
        b.film_b = {prefix + "film.b", std::move(fb)};
        b.out_w = {prefix + "out.w", init_weight(rng, H, H, 0.5)};
        b.out_b = {prefix + "out.b", Tensor({1, H}, 0.0)};
    }
    final_w_ = {"final.w", init_weight(rng, H, D, 1.0)};
    final_b_ = {"final.b", Tensor({1, D}, 0.0)};
}

std::vector<ad::Parameter*> Denoiser::parameters() {
    std::vector<ad::Parameter*> out{&proj_w_, &proj_b_, &emb1_w_, &emb1_b_, &emb2_w_, &emb2_b_};
    for (auto& b : blocks_)
        for (auto* p : {&b.in_w, &b.in_b, &b.film_w, &b.film_b, &b.out_w, &b.out_b}) out.push_back(p);
    out.push_back(&final_w_);
    out.push_back(&final_b_);
    return out;
}

std::vector<const ad::Parameter*> Denoiser::parameters() const {
    auto mut = const_cast<Denoiser*>(this)->parameters();
    return {mut.begin(), mut.end()};
}

std::size_t Denoiser::parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : parameters()) n += p->value.numel();
    return n;
}

std::uint64_t Denoiser::digest() const {
    std::uint64_t h = fnv1a("denoiser");
    for (std::size_t v : {cfg_.data_dim, cfg_.n_blocks, cfg_.hidden, cfg_.embed_dim, cfg_.n_fourier})
        h = splitmix64(h ^ v);
    auto mix = [&h](double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        h = splitmix64(h ^ bits);
    };
    mix(cfg_.sigma_data);
    for (double f : freqs_) mix(f);
    for (const auto* p : parameters()) {
        h = splitmix64(h ^ fnv1a(p->name));
        for (double v : p->value.data()) mix(v);
    }
    return h;
}

// ---------------------------------------------------------------- graph

ad::Var Denoiser::build_fourier(ad::Tape& tape, const ad::Var& t_column) const {
    const auto& tv = t_column.value();
    if (tv.cols() != 1) throw Error("fourier: expects a [R x 1] column, got " + shape_str(tv.shape()));
    for (double t : tv.data())
        if (!(t > 0.0)) throw Error("embed_time: noise level must be positive");
    const ad::Var c = ad::scale(ad::log(t_column), 0.25);
    const auto& cv = c.value();
    const std::size_t rows = cv.rows(), nf = freqs_.size();
    Tensor out({rows, 2 * nf});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < nf; ++k) {
            const double arg = freqs_[k] * cv[r];
            out.at(r, 2 * k) = std::sin(arg);
            out.at(r, 2 * k + 1) = std::cos(arg);
        }
    const ad::Var inputs[] = {c};
    return tape.record(std::move(out), inputs, [freqs = freqs_](const ad::BackwardContext& ctx) {
        const auto& y = ctx.output;
        const std::size_t nf = freqs.size();
        auto gin = ctx.input_grads[0]->data();
        for (std::size_t r = 0; r < gin.size(); ++r) {
            double acc = 0.0;
            for (std::size_t k = 0; k < nf; ++k) {
                // d sin = cos * f, d cos = -sin * f
                acc += freqs[k] * (ctx.output_grad.at(r, 2 * k) * y.at(r, 2 * k + 1) -
                                   ctx.output_grad.at(r, 2 * k + 1) * y.at(r, 2 * k));
            }
            gin[r] += acc;
        }
    });
}

template <typename Self, typename Bind>
ad::Var Denoiser::embedding_impl(Self& self, Bind&& bind, ad::Tape& tape, const ad::Var& t_column) {
    const ad::Var f = self.build_fourier(tape, t_column);
    const ad::Var h = ad::silu(ad::affine(f, bind(self.emb1_w_), bind(self.emb1_b_)));
    return ad::affine(h, bind(self.emb2_w_), bind(self.emb2_b_));
}

ad::Var Denoiser::build_embedding(ad::Tape& tape, const ad::Var& t_column) const {
    return embedding_impl(*this, [&tape](const ad::Parameter& p) { return tape.constant(p.value); }, tape, t_column);
}

template <typename Self, typename Bind>
ad::Var Denoiser::build_impl(Self& self, Bind&& bind, ad::Tape& tape, const ad::Var& x,
                             std::span<const double> sigma, std::span<const LayerInput> overrides,
                             FeatureCapture* capture) {
    const auto& cfg = self.cfg_;
    const auto& xv = x.value();
    if (xv.rank() != 2 || xv.cols() != cfg.data_dim)
        throw Error("denoiser: expected states of shape [B x " + std::to_string(cfg.data_dim) + "], got " +
                    shape_str(xv.shape()));
    if (!xv.all_finite()) throw Error("denoiser: non-finite input state");
    check_sigma(sigma, xv.rows());
    if (!overrides.empty() && overrides.size() != cfg.n_blocks)
        throw Error("denoiser: expected " + std::to_string(cfg.n_blocks) + " layer overrides, got " +
                    std::to_string(overrides.size()));

    const std::size_t R = sigma.size();
    const std::size_t D = cfg.data_dim, H = cfg.hidden;
    Tensor c_in({R, D}), c_skip({R, D}), c_out({R, D});
    for (std::size_t r = 0; r < R; ++r) {
        const auto pc = precondition(sigma[r], cfg.sigma_data);
        for (std::size_t c = 0; c < D; ++c) {
            c_in.at(r, c) = pc.c_in;
            c_skip.at(r, c) = pc.c_skip;
            c_out.at(r, c) = pc.c_out;
        }
    }

    bool need_vanilla = overrides.empty();
    for (const auto& ov : overrides) {
        if (ov.embedding && (ov.alpha || ov.beta))
            throw Error("denoiser: layer override sets both an embedding and FiLM parameters");
        if (static_cast<bool>(ov.alpha) != static_cast<bool>(ov.beta))
            throw Error("denoiser: FiLM override needs both alpha and beta");
        need_vanilla = need_vanilla || ov.empty();
    }
    std::optional<ad::Var> vanilla;
    if (need_vanilla) {
        const ad::Var tcol = tape.constant(Tensor({R, 1}, std::vector<double>(sigma.begin(), sigma.end())));
        vanilla = embedding_impl(self, bind, tape, tcol);
    }

    if (capture) {
        capture->pre_film.clear();
        capture->post_film.clear();
    }
    ad::Var h = ad::affine(ad::mul(x, tape.constant(std::move(c_in))), bind(self.proj_w_), bind(self.proj_b_));
    for (std::size_t l = 0; l < cfg.n_blocks; ++l) {
        auto& blk = self.blocks_[l];
        const LayerInput* ov = overrides.empty() ? nullptr : &overrides[l];
        ad::Var alpha, beta;
        if (ov && ov->alpha) {
            alpha = *ov->alpha;
            beta = *ov->beta;
            if (alpha.value().numel() != H || beta.value().numel() != H)
                throw Error("denoiser: FiLM override for layer " + std::to_string(l) + " must have width " +
                            std::to_string(H));
        } else {
            const ad::Var emb = (ov && ov->embedding) ? *ov->embedding : *vanilla;
            if (emb.value().cols() != cfg.embed_dim)
                throw Error("denoiser: embedding override for layer " + std::to_string(l) + " has shape " +
                            shape_str(emb.value().shape()));
            const ad::Var ab = ad::affine(emb, bind(blk.film_w), bind(blk.film_b));
            alpha = ad::slice(ab, 1, 0, H);
            beta = ad::slice(ab, 1, H, H);
        }
        const ad::Var u = ad::affine(h, bind(blk.in_w), bind(blk.in_b));
        const ad::Var m = ad::add(ad::mul(u, alpha), beta);
        if (capture) {
            capture->pre_film.push_back(u.value());
            capture->post_film.push_back(m.value());
        }
        h = ad::add(h, ad::affine(ad::silu(m), bind(blk.out_w), bind(blk.out_b)));
    }
    const ad::Var f = ad::affine(ad::silu(h), bind(self.final_w_), bind(self.final_b_));
    const ad::Var out = ad::add(ad::mul(x, tape.constant(std::move(c_skip))), ad::mul(f, tape.constant(std::move(c_out))));
    if (capture) capture->output = out.value();
    return out;
}

ad::Var Denoiser::build(ad::Tape& tape, const ad::Var& x, std::span<const double> sigma,
                        std::span<const LayerInput> overrides, FeatureCapture* capture) const {
    return build_impl(*this, [&tape](const ad::Parameter& p) { return tape.constant(p.value); }, tape, x, sigma,
                      overrides, capture);
}

ad::Var Denoiser::build_trainable(ad::Tape& tape, const ad::Var& x, std::span<const double> sigma) {
    return build_impl(*this, [&tape](ad::Parameter& p) { return tape.param(p); }, tape, x, sigma, {}, nullptr);
}

ad::Var Denoiser::denoise(ad::Tape& tape, const ad::Var& x, double t, std::span<const LayerInput> overrides) const {
    const double sigma[] = {t};
    return build(tape, x, sigma, overrides, nullptr);
}

std::vector<LayerInput> Denoiser::to_inputs(ad::Tape& tape, const LayerOverride& ov) const {
    const std::size_t L = cfg_.n_blocks;
    if (!ov.embeddings.empty() && ov.embeddings.size() != L)
        throw Error("LayerOverride: expected " + std::to_string(L) + " embedding slots");
    if (!ov.films.empty() && ov.films.size() != L) throw Error("LayerOverride: expected " + std::to_string(L) + " FiLM slots");
    if (ov.embeddings.empty() && ov.films.empty()) return {};
    std::vector<LayerInput> out(L);
    for (std::size_t l = 0; l < L; ++l) {
        const bool has_emb = !ov.embeddings.empty() && ov.embeddings[l].has_value();
        const bool has_film = !ov.films.empty() && ov.films[l].has_value();
        if (has_emb && has_film)
            throw Error("LayerOverride: layer " + std::to_string(l) + " sets both an embedding and FiLM parameters");
        if (has_emb) out[l].embedding = tape.constant(*ov.embeddings[l]);
        if (has_film) {
            out[l].alpha = tape.constant(ov.films[l]->alpha);
            out[l].beta = tape.constant(ov.films[l]->beta);
        }
    }
    return out;
}

// ---------------------------------------------------------------- value API

Tensor Denoiser::fourier(double t) const {
    ad::Tape tape;
    return build_fourier(tape, tape.constant(Tensor({1, 1}, {t}))).value();
}

Tensor Denoiser::embed_time(double t) const {
    ad::Tape tape;
    return build_embedding(tape, tape.constant(Tensor({1, 1}, {t}))).value();
}

FilmParams Denoiser::film_params(std::size_t layer, const Tensor& embedding) const {
    if (layer >= blocks_.size()) throw Error("film_params: invalid layer " + std::to_string(layer));
    ad::Tape tape;
    const auto& blk = blocks_[layer];
    const ad::Var ab = ad::affine(tape.constant(embedding), tape.constant(blk.film_w.value), tape.constant(blk.film_b.value));
    return {ad::slice(ab, 1, 0, cfg_.hidden).value(), ad::slice(ab, 1, cfg_.hidden, cfg_.hidden).value()};
}

Tensor Denoiser::forward(const Tensor& x, double t) const { return forward_with_overrides(x, t, {}); }

Tensor Denoiser::forward_with_overrides(const Tensor& x, double t, const LayerOverride& ov) const {
    ad::Tape tape;
    const auto inputs = to_inputs(tape, ov);
    return denoise(tape, tape.constant(x), t, inputs).value();
}

FeatureCapture Denoiser::capture_features(const Tensor& x, double t, const LayerOverride& ov) const {
    ad::Tape tape;
    const auto inputs = to_inputs(tape, ov);
    FeatureCapture cap;
    const double sigma[] = {t};
    build(tape, tape.constant(x), sigma, inputs, &cap);
    return cap;
}

}  // namespace mteo
