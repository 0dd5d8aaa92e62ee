// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mteo/analysis.hpp"

#include <algorithm>
#include <map>
#include <memory>

#include <Eigen/Dense>

#include "mteo/adam.hpp"
#include "mteo/metrics.hpp"
#include "mteo/rng.hpp"

namespace mteo {

std::vector<double> default_sweep_grid() { return make_schedule(ScheduleKind::polynomial, 121).times; }

namespace {

void check_grid(const std::vector<double>& grid) {
    if (grid.empty()) throw Error("sweep: empty grid");
    for (double t : grid)
        if (!(t > 0.0) || !std::isfinite(t)) throw Error("sweep: grid values must be positive and finite");
}

void check_step(const TeacherSet& teachers, std::size_t step) {
    teachers.validate();
    if (step >= teachers.student.intervals())
        throw Error("sweep: step " + std::to_string(step) + " out of range for a " +
                    std::to_string(teachers.student.intervals()) + "-interval schedule");
}

double row_distance(const Tensor& a, const Tensor& b, std::size_t r) {
    double s = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) {
        const double d = a.at(r, c) - b.at(r, c);
        s += d * d;
    }
    return std::sqrt(s);
}

// Fills distance, argmin and per-seed argmins from a [grid x seeds] distance table.
void finish_sweep(SweepResult& res, const std::vector<std::vector<double>>& per_seed) {
    const std::size_t g = res.grid.size();
    const std::size_t n = per_seed.front().size();
    res.distance.assign(g, 0.0);
    for (std::size_t j = 0; j < g; ++j) {
        double s = 0.0;
        for (double v : per_seed[j]) s += v;
        res.distance[j] = s / static_cast<double>(n);
        if (!std::isfinite(res.distance[j])) throw Error("sweep: non-finite distance");
    }
    res.argmin = static_cast<std::size_t>(std::min_element(res.distance.begin(), res.distance.end()) - res.distance.begin());
    res.tau_star = res.grid[res.argmin];
    res.interior = res.tau_star > res.t_next && res.tau_star < res.t_cur;
    res.seed_tau_star.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < g; ++j)
            if (per_seed[j][r] < per_seed[best][r]) best = j;
        res.seed_tau_star[r] = res.grid[best];
    }
}

}  // namespace

SweepResult time_sweep(const Denoiser& net, const TeacherSet& teachers, std::size_t step,
                       const std::vector<double>& grid) {
    check_grid(grid);
    check_step(teachers, step);
    SweepResult res;
    res.step = step;
    res.t_cur = teachers.student[step];
    res.t_next = teachers.student[step + 1];
    res.grid = grid;
    const Tensor& x = teachers.states[step];
    const Tensor& target = teachers.states[step + 1];

    std::vector<std::vector<double>> per_seed(grid.size(), std::vector<double>(x.rows()));
    ad::Tape tape;
    for (std::size_t j = 0; j < grid.size(); ++j) {
        tape.clear();
        const auto ov = net.to_inputs(tape, LayerOverride::broadcast(net.embed_time(grid[j]), net.n_layers()));
        SolverState state;
        const ad::Var xn = ddim_step(tape, tape.constant(x), res.t_cur, res.t_next, net, ov, state);
        for (std::size_t r = 0; r < x.rows(); ++r) per_seed[j][r] = row_distance(xn.value(), target, r);
    }
    finish_sweep(res, per_seed);
    return res;
}

std::vector<Tensor> teacher_interval_features(const Denoiser& net, const TeacherSet& teachers, std::size_t step) {
    check_step(teachers, step);
    const Schedule dense = refine_schedule(teachers.student, teachers.k);
    const Trajectory traj = sample(teachers.kind, dense, net, teachers.states[0]);
    std::vector<Tensor> mean(net.n_layers());
    const std::size_t j0 = step * teachers.k, j1 = j0 + teachers.k;
    for (std::size_t j = j0; j < j1; ++j) {
        const FeatureCapture cap = net.capture_features(traj.states[j], dense[j]);
        for (std::size_t l = 0; l < mean.size(); ++l) {
            if (mean[l].empty()) mean[l] = Tensor(cap.post_film[l].shape(), 0.0);
            for (std::size_t e = 0; e < mean[l].numel(); ++e) mean[l][e] += cap.post_film[l][e];
        }
    }
    for (auto& m : mean)
        for (std::size_t e = 0; e < m.numel(); ++e) m[e] /= static_cast<double>(teachers.k);
    return mean;
}

namespace {

SweepResult layer_sweep_with(const Denoiser& net, const TeacherSet& teachers, std::size_t step, std::size_t layer,
                             const std::vector<double>& grid, const Tensor& target) {
    SweepResult res;
    res.step = step;
    res.t_cur = teachers.student[step];
    res.t_next = teachers.student[step + 1];
    res.grid = grid;
    const Tensor& x = teachers.states[step];
    std::vector<std::vector<double>> per_seed(grid.size(), std::vector<double>(x.rows()));
    for (std::size_t j = 0; j < grid.size(); ++j) {
        LayerOverride ov;
        ov.embeddings.assign(net.n_layers(), std::nullopt);
        ov.embeddings[layer] = net.embed_time(grid[j]);
        const FeatureCapture cap = net.capture_features(x, res.t_cur, ov);
        for (std::size_t r = 0; r < x.rows(); ++r) per_seed[j][r] = row_distance(cap.post_film[layer], target, r);
    }
    finish_sweep(res, per_seed);
    return res;
}

}  // namespace

SweepResult layer_time_sweep(const Denoiser& net, const TeacherSet& teachers, std::size_t step, std::size_t layer,
                             const std::vector<double>& grid) {
    check_grid(grid);
    if (layer >= net.n_layers()) throw Error("layer_time_sweep: invalid layer " + std::to_string(layer));
    const auto targets = teacher_interval_features(net, teachers, step);
    return layer_sweep_with(net, teachers, step, layer, grid, targets[layer]);
}

std::vector<SweepResult> layer_time_sweeps(const Denoiser& net, const TeacherSet& teachers, std::size_t step,
                                           const std::vector<double>& grid) {
    check_grid(grid);
    const auto targets = teacher_interval_features(net, teachers, step);
    std::vector<SweepResult> out;
    for (std::size_t l = 0; l < net.n_layers(); ++l) out.push_back(layer_sweep_with(net, teachers, step, l, grid, targets[l]));
    return out;
}

std::size_t PcaResult::components_for(double level) const {
    for (std::size_t i = 0; i < cumulative.size(); ++i)
        if (cumulative[i] >= level) return i + 1;
    return cumulative.size();
}

PcaResult pca(const Tensor& points) {
    const std::size_t n = points.rows(), d = points.cols();
    if (points.rank() != 2 || n < 2) throw Error("pca: need at least two points, got " + shape_str(points.shape()));
    Eigen::MatrixXd x = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        points.data().data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    x.rowwise() -= x.colwise().mean();
    if (x.cwiseAbs().maxCoeff() == 0.0) throw Error("pca: zero variance (all points identical)");

    // Covariance and Gram matrices share their non-zero spectrum; use the smaller one.
    const Eigen::MatrixXd m = d <= n ? Eigen::MatrixXd(x.transpose() * x) : Eigen::MatrixXd(x * x.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m / static_cast<double>(n - 1), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw Error("pca: eigendecomposition failed");

    PcaResult res;
    const auto& ev = es.eigenvalues();
    for (Eigen::Index i = ev.size() - 1; i >= 0; --i) res.eigenvalues.push_back(std::max(0.0, ev[i]));
    double trace = 0.0;
    for (double v : res.eigenvalues) trace += v;
    if (!(trace > 0.0)) throw Error("pca: zero variance");
    res.n_components = res.eigenvalues.size();
    double acc = 0.0;
    for (double v : res.eigenvalues) {
        res.ratios.push_back(v / trace);
        acc += v / trace;
        res.cumulative.push_back(acc);
    }
    return res;
}

std::vector<PcaResult> feature_trajectory_pca(const Denoiser& net, const Trajectory& traj) {
    if (traj.states.size() < 2) throw Error("feature_trajectory_pca: trajectory needs at least two states");
    const std::size_t L = net.n_layers();
    std::vector<Tensor> rows(L);
    for (std::size_t j = 0; j < traj.states.size(); ++j) {
        const FeatureCapture cap = net.capture_features(traj.states[j], traj.schedule[j]);
        for (std::size_t l = 0; l < L; ++l) {
            const Tensor& f = cap.pre_film[l];
            if (rows[l].empty()) rows[l] = Tensor({traj.states.size(), f.numel()});
            std::copy(f.data().begin(), f.data().end(), rows[l].data().begin() + static_cast<std::ptrdiff_t>(j * f.numel()));
        }
    }
    std::vector<PcaResult> out;
    for (const auto& r : rows) out.push_back(pca(r));
    return out;
}

namespace {

double film_l1(const Tensor& target, const Tensor& s, const Tensor& alpha, const Tensor& beta) {
    const std::size_t h = s.cols();
    double acc = 0.0;
    for (std::size_t r = 0; r < s.rows(); ++r)
        for (std::size_t c = 0; c < h; ++c) acc += std::abs(target.at(r, c) - (alpha[c] * s.at(r, c) + beta[c]));
    return acc / static_cast<double>(s.numel());
}

}  // namespace

FilmFit film_capacity(const Tensor& teacher_mod, const Tensor& student_pre, const FilmParams& init,
                      const FilmCapacityOptions& opt) {
    if (teacher_mod.shape() != student_pre.shape() || teacher_mod.rank() != 2)
        throw Error("film_capacity: shape mismatch " + shape_str(teacher_mod.shape()) + " vs " +
                    shape_str(student_pre.shape()));
    const std::size_t n = student_pre.rows(), h = student_pre.cols();
    if (init.alpha.numel() != h || init.beta.numel() != h)
        throw Error("film_capacity: FiLM parameters " + shape_str(init.alpha.shape()) + " do not match width " +
                    std::to_string(h));

    FilmFit fit;
    fit.pre_l1 = film_l1(teacher_mod, student_pre, init.alpha, init.beta);

    // Per-channel least squares.
    Tensor a({1, h}), b({1, h});
    for (std::size_t c = 0; c < h; ++c) {
        double ms = 0.0, mt = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            ms += student_pre.at(r, c);
            mt += teacher_mod.at(r, c);
        }
        ms /= static_cast<double>(n);
        mt /= static_cast<double>(n);
        double cov = 0.0, var = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            const double ds = student_pre.at(r, c) - ms;
            cov += ds * (teacher_mod.at(r, c) - mt);
            var += ds * ds;
        }
        a[c] = var > 0.0 ? cov / var : init.alpha[c];
        b[c] = mt - a[c] * ms;
    }

    Tensor best_a = init.alpha, best_b = init.beta;
    double best = fit.pre_l1;
    if (const double ls = film_l1(teacher_mod, student_pre, a, b); ls < best) {
        best = ls;
        best_a = a;
        best_b = b;
    }

    ad::Parameter pa("film.alpha", best_a), pb("film.beta", best_b);
    std::vector<ad::Parameter*> params{&pa, &pb};
    AdamState adam(params, AdamConfig{opt.lr});
    ad::Tape tape;
    for (std::size_t it = 0; it < opt.iterations && best > 0.0; ++it) {
        tape.clear();
        pa.zero_grad();
        pb.zero_grad();
        const ad::Var s = tape.constant(student_pre);
        const ad::Var out = ad::add(ad::mul(s, tape.param(pa)), tape.param(pb));
        const ad::Var loss = ad::mean(ad::abs(ad::sub(out, tape.constant(teacher_mod))));
        tape.backward(loss);
        adam.step(params, opt.lr);
        const double l = film_l1(teacher_mod, student_pre, pa.value, pb.value);
        if (l < best) {
            best = l;
            best_a = pa.value;
            best_b = pb.value;
        }
    }
    fit.post_l1 = best;
    fit.fitted = {std::move(best_a), std::move(best_b)};
    return fit;
}

Tensor integrate_to(const DenoiserModel& model, const Tensor& x, double t_from, double tau, std::size_t substeps) {
    if (!(tau < t_from)) throw Error("integrate_to: target time must be below the start time");
    if (substeps < 1) throw Error("integrate_to: need at least one substep");
    const Schedule s = make_schedule(ScheduleKind::logsnr, substeps + 1, tau, t_from);
    return sample(SolverKind::ipndm, s, model, x).final_state();
}

std::vector<FilmProbeRow> film_probe(const Denoiser& net, const TeacherSet& teachers, std::size_t step,
                                     const std::vector<double>& grid, std::size_t substeps,
                                     const FilmCapacityOptions& opt) {
    check_grid(grid);
    check_step(teachers, step);
    const double t_cur = teachers.student[step], t_next = teachers.student[step + 1];
    const Tensor& x = teachers.states[step];
    const FeatureCapture student = net.capture_features(x, t_cur);
    const Tensor e_cur = net.embed_time(t_cur);
    std::vector<FilmProbeRow> rows;
    for (double tau : grid) {
        if (!(tau > t_next && tau < t_cur)) continue;
        const Tensor x_tau = integrate_to(net, x, t_cur, tau, substeps);
        const FeatureCapture teacher = net.capture_features(x_tau, tau);
        for (std::size_t l = 0; l < net.n_layers(); ++l) {
            const FilmFit fit = film_capacity(teacher.post_film[l], student.pre_film[l], net.film_params(l, e_cur), opt);
            rows.push_back({tau, l, fit.pre_l1, fit.post_l1});
        }
    }
    if (rows.empty()) throw Error("film_probe: no grid point lies strictly inside the interval");
    return rows;
}

EmbeddingPca embedding_pca(const Denoiser& net, const EmbeddingBank* bank, const std::vector<double>& grid) {
    check_grid(grid);
    const std::size_t L = net.n_layers(), d = net.config().embed_dim, h = net.config().hidden;
    EmbeddingPca res;
    Tensor emb({grid.size(), d});
    Tensor films({grid.size() * L, 2 * h});
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const Tensor e = net.embed_time(grid[j]);
        std::copy(e.data().begin(), e.data().end(), emb.data().begin() + static_cast<std::ptrdiff_t>(j * d));
        for (std::size_t l = 0; l < L; ++l) {
            const FilmParams fp = net.film_params(l, e);
            auto dst = films.data().begin() + static_cast<std::ptrdiff_t>((j * L + l) * 2 * h);
            dst = std::copy(fp.alpha.data().begin(), fp.alpha.data().end(), dst);
            std::copy(fp.beta.data().begin(), fp.beta.data().end(), dst);
        }
    }
    res.vanilla_embedding = pca(emb);
    res.vanilla_film = pca(films);
    if (!bank) return res;
    if (bank->variant == BankVariant::deep) throw Error("embedding_pca: the deep variant stores no embeddings");
    res.has_bank = true;
    std::vector<Tensor> vecs;
    std::vector<Tensor> fvecs;
    for (std::size_t i = 0; i < bank->n_steps(); ++i)
        for (std::size_t l = 0; l < L; ++l) {
            const Tensor& phi = bank->variant == BankVariant::single ? bank->steps[i][0].value : bank->steps[i][l].value;
            if (bank->variant == BankVariant::multi_layer || l == 0) vecs.push_back(phi);
            const FilmParams fp = net.film_params(l, phi);
            Tensor row({1, 2 * h});
            std::copy(fp.alpha.data().begin(), fp.alpha.data().end(), row.data().begin());
            std::copy(fp.beta.data().begin(), fp.beta.data().end(), row.data().begin() + static_cast<std::ptrdiff_t>(h));
            fvecs.push_back(std::move(row));
        }
    auto stack = [](const std::vector<Tensor>& rows) {
        Tensor out({rows.size(), rows.front().numel()});
        for (std::size_t r = 0; r < rows.size(); ++r)
            std::copy(rows[r].data().begin(), rows[r].data().end(),
                      out.data().begin() + static_cast<std::ptrdiff_t>(r * rows[r].numel()));
        return out;
    };
    res.mte_embedding = pca(stack(vecs));
    res.mte_film = pca(stack(fvecs));
    return res;
}

Metric energy_metric(const GmmSpec& spec, std::size_t n_ref, std::uint64_t seed) {
    auto ref = std::make_shared<const Tensor>(sample_gmm(spec, n_ref, stream_seed(seed, "metric-reference")));
    return [ref](const Tensor& endpoints) { return energy_distance(endpoints, *ref); };
}

double evaluate(const DenoiserModel& net, const EmbeddingBank* bank, const std::vector<bool>& mask,
                const EvalSetup& setup, const Metric& metric) {
    const Tensor x_T = initial_state(setup.global_seed, setup.seed_lo, setup.n_samples, setup.schedule[0]);
    SampleOptions opts;
    opts.bank = bank;
    opts.mask = mask;
    return metric(sample(setup.kind, setup.schedule, net, x_T, opts).final_state());
}

std::vector<GainDropResult> gain_drop(const DenoiserModel& net, const EmbeddingBank& bank, const EvalSetup& setup,
                                      const std::vector<std::vector<std::size_t>>& subsets, const Metric& metric) {
    const std::size_t n = setup.schedule.intervals();
    if (bank.n_steps() != n) throw Error("gain_drop: bank step count does not match the schedule");
    std::map<std::vector<bool>, double> cache;
    auto m = [&](const std::vector<bool>& mask) {
        auto it = cache.find(mask);
        if (it != cache.end()) return it->second;
        const double v = evaluate(net, &bank, mask, setup, metric);
        cache.emplace(mask, v);
        return v;
    };
    const double m_empty = m(std::vector<bool>(n, false));
    const double m_full = m(std::vector<bool>(n, true));
    std::vector<GainDropResult> out;
    for (const auto& subset : subsets) {
        std::vector<bool> on(n, false);
        for (auto i : subset) {
            if (i >= n) throw Error("gain_drop: step " + std::to_string(i) + " is outside 0.." + std::to_string(n - 1));
            if (on[i]) throw Error("gain_drop: step " + std::to_string(i) + " repeated in subset");
            on[i] = true;
        }
        std::vector<bool> off(n);
        for (std::size_t i = 0; i < n; ++i) off[i] = !on[i];
        GainDropResult r;
        r.subset = subset;
        r.m_empty = m_empty;
        r.m_full = m_full;
        r.m_subset = m(on);
        r.m_complement = m(off);
        r.gain = r.m_empty - r.m_subset;
        r.drop = r.m_complement - r.m_full;
        out.push_back(std::move(r));
    }
    return out;
}

TransferResult step_transfer(const DenoiserModel& net, const EmbeddingBank& bank, const EvalSetup& setup,
                             std::size_t k, const Metric& metric) {
    const Schedule& student = setup.schedule;
    if (bank.schedule_fingerprint != student.fingerprint())
        throw Error("step_transfer: bank was trained on a different schedule");
    const Schedule refined = refine_schedule(student, k);
    SampleOptions opts;
    opts.bank = &bank;
    opts.bank_map.assign(refined.intervals(), SampleOptions::kNoBankStep);
    std::size_t matched = 0;
    for (std::size_t j = 0; j < refined.intervals(); ++j) {
        const std::size_t i = find_time(student, refined[j]);
        if (i < student.intervals()) {
            opts.bank_map[j] = i;
            ++matched;
        }
    }
    if (matched != student.intervals()) throw Error("step_transfer: refined schedule does not contain every student time");
    const Tensor x_T = initial_state(setup.global_seed, setup.seed_lo, setup.n_samples, student[0]);
    TransferResult res;
    res.k = k;
    res.with_bank = metric(sample(setup.kind, refined, net, x_T, opts).final_state());
    res.vanilla = metric(sample(setup.kind, refined, net, x_T).final_state());
    return res;
}

}  // namespace mteo
