// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mteo/autodiff.hpp"
#include "mteo/tensor.hpp"

namespace mteo {

struct NetConfig {
    std::size_t data_dim = 2;
    std::size_t n_blocks = 6;
    std::size_t hidden = 64;
    std::size_t embed_dim = 32;
    std::size_t n_fourier = 16;
    double sigma_data = 0.5;

    void validate() const;
    friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

/// Per-channel FiLM scale and shift, each [1 x hidden].
struct FilmParams {
    Tensor alpha;
    Tensor beta;
};

/// out = alpha * features + beta, broadcast over rows.
Tensor film(const Tensor& features, const FilmParams& params);

/// Value-level replacement of the time conditioning, per layer.
/// A layer uses its embedding override, its FiLM override, or (neither) e(t).
struct LayerOverride {
    std::vector<std::optional<Tensor>> embeddings;
    std::vector<std::optional<FilmParams>> films;

    static LayerOverride none() { return {}; }
    /// Every layer conditioned on the same embedding vector.
    static LayerOverride broadcast(const Tensor& embedding, std::size_t n_layers);
};

/// Graph-level conditioning input for one layer. Either `embedding` ([1 x d]) or
/// both `alpha` and `beta` ([1 x hidden]) may be set; none means vanilla e(t).
struct LayerInput {
    std::optional<ad::Var> embedding;
    std::optional<ad::Var> alpha;
    std::optional<ad::Var> beta;

    bool empty() const { return !embedding && !alpha && !beta; }
};

/// Per-layer features recorded during a forward pass.
struct FeatureCapture {
    std::vector<Tensor> pre_film;   // s_l, [rows x hidden]
    std::vector<Tensor> post_film;  // alpha_l * s_l + beta_l
    Tensor output;                  // denoised prediction
};

/// Anything the samplers can integrate with: a (possibly conditioning-aware) denoiser D(x, t).
class DenoiserModel {
public:
    virtual ~DenoiserModel() = default;

    /// Records D(x, t) on `tape`. `overrides` is empty or has one entry per layer.
    virtual ad::Var denoise(ad::Tape& tape, const ad::Var& x, double t, std::span<const LayerInput> overrides) const = 0;
};

/// Fourier time encoding -> embedding MLP -> residual FiLM blocks, wrapped in
/// EDM preconditioning. Weights are treated as frozen unless bound trainable.
class Denoiser final : public DenoiserModel {
public:
    Denoiser() = default;
    Denoiser(const NetConfig& cfg, std::uint64_t init_seed);

    const NetConfig& config() const { return cfg_; }
    std::size_t n_layers() const { return cfg_.n_blocks; }
    const std::vector<double>& frequencies() const { return freqs_; }

    std::vector<ad::Parameter*> parameters();
    std::vector<const ad::Parameter*> parameters() const;
    std::size_t parameter_count() const;
    /// Hash of config and every weight.
    std::uint64_t digest() const;

    /// Fourier features of c_noise = ln(t)/4, interleaved (sin f0 c, cos f0 c, sin f1 c, ...).
    Tensor fourier(double t) const;
    /// e(t), [1 x embed_dim].
    Tensor embed_time(double t) const;
    /// (alpha, beta) = affine_l(embedding).
    FilmParams film_params(std::size_t layer, const Tensor& embedding) const;

    Tensor forward(const Tensor& x, double t) const;
    Tensor forward_with_overrides(const Tensor& x, double t, const LayerOverride& ov) const;
    FeatureCapture capture_features(const Tensor& x, double t, const LayerOverride& ov = {}) const;

    ad::Var denoise(ad::Tape& tape, const ad::Var& x, double t, std::span<const LayerInput> overrides) const override;

    /// Graph builders. `sigma` holds one shared noise level or one per row of x.
    ad::Var build(ad::Tape& tape, const ad::Var& x, std::span<const double> sigma,
                  std::span<const LayerInput> overrides, FeatureCapture* capture = nullptr) const;
    /// As build(), but weights enter the tape as parameters and receive gradients.
    ad::Var build_trainable(ad::Tape& tape, const ad::Var& x, std::span<const double> sigma);
    /// e(t) for a column of noise levels [R x 1]; differentiable w.r.t. t.
    ad::Var build_embedding(ad::Tape& tape, const ad::Var& t_column) const;
    /// Interleaved Fourier features of ln(t)/4 for a column [R x 1].
    ad::Var build_fourier(ad::Tape& tape, const ad::Var& t_column) const;

    /// Graph-level conversion of a value override (entries enter as constants).
    std::vector<LayerInput> to_inputs(ad::Tape& tape, const LayerOverride& ov) const;

private:
    struct Block {
        ad::Parameter in_w, in_b, film_w, film_b, out_w, out_b;
    };

    template <typename Self, typename Bind>
    static ad::Var build_impl(Self& self, Bind&& bind, ad::Tape& tape, const ad::Var& x, std::span<const double> sigma,
                              std::span<const LayerInput> overrides, FeatureCapture* capture);
    template <typename Self, typename Bind>
    static ad::Var embedding_impl(Self& self, Bind&& bind, ad::Tape& tape, const ad::Var& t_column);

    NetConfig cfg_;
    std::vector<double> freqs_;
    ad::Parameter proj_w_, proj_b_;
    ad::Parameter emb1_w_, emb1_b_, emb2_w_, emb2_b_;
    std::vector<Block> blocks_;
    ad::Parameter final_w_, final_b_;
};

/// EDM preconditioning coefficients.
struct Precond {
    double c_skip, c_out, c_in, c_noise;
};
Precond precondition(double sigma, double sigma_data);

}  // namespace mteo
