// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mteo/cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "mteo/analysis.hpp"
#include "mteo/backbone.hpp"
#include "mteo/config.hpp"
#include "mteo/io.hpp"
#include "mteo/metrics.hpp"
#include "mteo/rng.hpp"
#include "mteo/trainer.hpp"

namespace mteo {

namespace {

namespace fs = std::filesystem;

std::string num(double v) { return format_double(v); }
std::string num(std::size_t v) { return std::to_string(v); }

std::uint64_t file_digest(const fs::path& p) {
    const std::string bytes = read_file(p);
    return fnv1a(bytes);
}

/// Collects outputs of one command and writes its manifest.
class Run {
public:
    Run(std::string command, RunConfig cfg, std::ostream& out)
        : command_(std::move(command)), cfg_(std::move(cfg)), out_(out), start_(std::chrono::steady_clock::now()) {
        fs::create_directories(cfg_.out_dir());
    }

    const RunConfig& cfg() const { return cfg_; }

    void input(const fs::path& p) { inputs_.push_back(p); }

    void artifact(const fs::path& p) {
        artifacts_.push_back(p);
        out_ << "wrote " << p.string() << "\n";
    }

    void csv(const std::string& name, const CsvWriter& w) {
        const fs::path p = cfg_.out_dir() / name;
        w.save(p);
        artifact(p);
    }

    void finish() {
        nlohmann::ordered_json m;
        m["command"] = command_;
        m["seed"] = cfg_.seed();
        m["config"] = cfg_.dump();
        auto& in = m["inputs"] = nlohmann::ordered_json::object();
        for (const auto& p : inputs_) in[p.string()] = hex64(file_digest(p));
        auto& arts = m["artifacts"] = nlohmann::ordered_json::object();
        for (const auto& p : artifacts_) arts[p.string()] = hex64(file_digest(p));
        m["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        const fs::path path = cfg_.out_dir() / ("manifest-" + command_ + ".json");
        write_file_atomic(path, m.dump(2) + "\n");
    }

private:
    std::string command_;
    RunConfig cfg_;
    std::ostream& out_;
    std::chrono::steady_clock::time_point start_;
    std::vector<fs::path> inputs_;
    std::vector<fs::path> artifacts_;
};

fs::path require(const fs::path& p) {
    if (!fs::exists(p)) throw Error("missing artifact: " + p.string());
    return p;
}

Denoiser load_backbone(Run& run) {
    const fs::path p = require(run.cfg().path("backbone"));
    run.input(p);
    return load_denoiser(p);
}

TeacherSet load_teacher_set(Run& run, const Denoiser& net) {
    const fs::path p = require(run.cfg().path("teachers"));
    run.input(p);
    TeacherSet t = load_teachers(p);
    if (t.backbone_fingerprint != net.digest())
        throw Error("fingerprint mismatch: teachers were generated by backbone " + hex64(t.backbone_fingerprint) +
                    ", loaded backbone is " + hex64(net.digest()));
    const Schedule s = run.cfg().schedule();
    if (t.student.fingerprint() != s.fingerprint())
        throw Error("fingerprint mismatch: teacher schedule " + hex64(t.student.fingerprint()) +
                    ", configured schedule " + hex64(s.fingerprint()));
    return t;
}

std::optional<EmbeddingBank> load_bank_if_enabled(Run& run, const Denoiser& net, const Schedule& schedule) {
    if (!run.cfg().get_bool("eval", "use_bank")) return std::nullopt;
    const fs::path p = require(run.cfg().path("bank"));
    run.input(p);
    EmbeddingBank bank = load_bank(p);
    bank.check_compatible(schedule, net);
    return bank;
}

EvalSetup eval_setup(const RunConfig& cfg) {
    EvalSetup e;
    e.kind = cfg.solver();
    e.schedule = cfg.schedule();
    e.global_seed = cfg.seed();
    e.seed_lo = cfg.get_u64("eval", "seed_lo");
    e.n_samples = cfg.get_size("eval", "n_samples");
    return e;
}

Metric config_metric(const RunConfig& cfg) {
    return energy_metric(cfg.gmm(), cfg.get_size("eval", "n_ref"), cfg.seed());
}

std::vector<double> sweep_grid(const RunConfig& cfg) {
    return make_schedule(ScheduleKind::polynomial, cfg.get_size("analysis", "grid_points")).times;
}

void cmd_train_backbone(Run& run) {
    const auto& cfg = run.cfg();
    BackboneReport rep;
    const Denoiser net = train_backbone(cfg.gmm(), cfg.net(), cfg.backbone(), &rep);
    const fs::path p = cfg.path("backbone");
    save_denoiser(p, net);
    run.artifact(p);
    CsvWriter w({"epoch", "loss"});
    for (std::size_t e = 0; e < rep.epoch_loss.size(); ++e) w.row({num(e), num(rep.epoch_loss[e])});
    run.csv("backbone_loss.csv", w);
    CsvWriter s({"initial_eval_loss", "final_eval_loss"});
    s.row({num(rep.initial_loss), num(rep.final_loss)});
    run.csv("backbone_summary.csv", s);
}

void cmd_gen_teachers(Run& run) {
    const auto& cfg = run.cfg();
    const Denoiser net = load_backbone(run);
    const TeacherSet t = gen_teachers(net, cfg.schedule(), cfg.get_size("teacher", "k"),
                                      parse_solver_kind(cfg.get("teacher", "kind")), cfg.get_u64("teacher", "seed_lo"),
                                      cfg.get_u64("teacher", "seed_hi"), cfg.seed(), net.digest());
    const fs::path p = cfg.path("teachers");
    save_teachers(p, t);
    run.artifact(p);
}

void cmd_train_mteo(Run& run) {
    const auto& cfg = run.cfg();
    const Denoiser net = load_backbone(run);
    const TeacherSet t = load_teacher_set(run, net);
    EmbeddingBank bank = init_bank(net, t.student, cfg.variant());
    const TrainReport rep = train(bank, t, net, cfg.solver(), cfg.mteo());
    const fs::path p = cfg.path("bank");
    save_bank(p, bank, t.student);
    run.artifact(p);
    CsvWriter curve({"epoch", "step", "loss"});
    CsvWriter steps({"step", "epochs", "stop_reason", "eps", "initial_loss", "final_loss"});
    for (std::size_t i = 0; i < rep.steps.size(); ++i) {
        const auto& s = rep.steps[i];
        for (std::size_t e = 0; e < s.epoch_loss.size(); ++e) curve.row({num(e), num(i), num(s.epoch_loss[e])});
        steps.row({num(i), num(s.epochs), to_string(s.reason), num(s.eps), num(s.initial_loss), num(s.final_loss)});
    }
    run.csv("train_report.csv", curve);
    run.csv("train_steps.csv", steps);
}

void cmd_sample(Run& run) {
    const auto& cfg = run.cfg();
    const Denoiser net = load_backbone(run);
    const EvalSetup e = eval_setup(cfg);
    const auto bank = load_bank_if_enabled(run, net, e.schedule);
    const Tensor x_T = initial_state(e.global_seed, e.seed_lo, e.n_samples, e.schedule[0], net.config().data_dim);
    SampleOptions opts;
    opts.bank = bank ? &*bank : nullptr;
    const Trajectory traj = sample(e.kind, e.schedule, net, x_T, opts);

    Container c;
    c.set("kind", "trajectory");
    c.set("solver", to_string(traj.solver));
    c.set("overrides", traj.overrides);
    c.set("seed_lo", std::to_string(e.seed_lo));
    c.set("global_seed", std::to_string(e.global_seed));
    c.add("schedule.times", Tensor({traj.schedule.size()}, traj.schedule.times));
    for (std::size_t i = 0; i < traj.states.size(); ++i) c.add("state." + std::to_string(i), traj.states[i]);
    const fs::path p = cfg.out_dir() / "trajectory.bin";
    write_container(p, c);
    run.artifact(p);

    std::vector<std::string> cols{"seed"};
    for (std::size_t d = 0; d < traj.final_state().cols(); ++d) cols.push_back("x" + std::to_string(d));
    CsvWriter w(cols);
    for (std::size_t r = 0; r < traj.final_state().rows(); ++r) {
        std::vector<std::string> row{std::to_string(e.seed_lo + r)};
        for (std::size_t d = 0; d < traj.final_state().cols(); ++d) row.push_back(num(traj.final_state().at(r, d)));
        w.row(row);
    }
    run.csv("samples.csv", w);
}

void cmd_eval(Run& run) {
    const auto& cfg = run.cfg();
    const Denoiser net = load_backbone(run);
    const EvalSetup e = eval_setup(cfg);
    const auto bank = load_bank_if_enabled(run, net, e.schedule);
    const Tensor x_T = initial_state(e.global_seed, e.seed_lo, e.n_samples, e.schedule[0], net.config().data_dim);
    SampleOptions opts;
    opts.bank = bank ? &*bank : nullptr;
    const Trajectory traj = sample(e.kind, e.schedule, net, x_T, opts);
    const Tensor ref = sample_gmm(cfg.gmm(), cfg.get_size("eval", "n_ref"), stream_seed(cfg.seed(), "metric-reference"));
    CsvWriter w({"metric", "value"});
    w.row({"energy_distance", num(energy_distance(traj.final_state(), ref))});
    w.row({"sliced_w1", num(sliced_wasserstein(traj.final_state(), ref, cfg.get_size("eval", "n_proj"), cfg.seed()))});
    w.row({"nfe", num(traj.nfe)});
    run.csv("eval.csv", w);
}

void write_sweep(Run& run, const std::string& stem, const std::vector<SweepResult>& res, bool per_layer) {
    std::vector<std::string> cols;
    if (per_layer) cols.push_back("layer");
    cols.insert(cols.end(), {"tau", "distance"});
    CsvWriter curve(cols);
    std::vector<std::string> scols;
    if (per_layer) scols.push_back("layer");
    scols.insert(scols.end(), {"step", "t_cur", "t_next", "tau_star", "argmin", "interior", "seed_interior_fraction"});
    CsvWriter summary(scols);
    for (std::size_t l = 0; l < res.size(); ++l) {
        const auto& r = res[l];
        for (std::size_t j = 0; j < r.grid.size(); ++j) {
            std::vector<std::string> row;
            if (per_layer) row.push_back(num(l));
            row.insert(row.end(), {num(r.grid[j]), num(r.distance[j])});
            curve.row(row);
        }
        std::size_t inside = 0;
        for (double t : r.seed_tau_star) inside += t > r.t_next && t < r.t_cur;
        std::vector<std::string> row;
        if (per_layer) row.push_back(num(l));
        row.insert(row.end(), {num(r.step), num(r.t_cur), num(r.t_next), num(r.tau_star), num(r.argmin),
                               r.interior ? "1" : "0",
                               num(static_cast<double>(inside) / static_cast<double>(r.seed_tau_star.size()))});
        summary.row(row);
    }
    run.csv(stem + ".csv", curve);
    run.csv(stem + "_summary.csv", summary);
}

void cmd_sweep(Run& run) {
    const Denoiser net = load_backbone(run);
    const TeacherSet t = load_teacher_set(run, net);
    write_sweep(run, "sweep", {time_sweep(net, t, run.cfg().get_size("analysis", "step"), sweep_grid(run.cfg()))}, false);
}

void cmd_layer_sweep(Run& run) {
    const Denoiser net = load_backbone(run);
    const TeacherSet t = load_teacher_set(run, net);
    write_sweep(run, "layer_sweep", layer_time_sweeps(net, t, run.cfg().get_size("analysis", "step"), sweep_grid(run.cfg())),
                true);
}

void write_pca_rows(CsvWriter& w, const std::string& label, const PcaResult& p) {
    for (std::size_t i = 0; i < p.ratios.size(); ++i) w.row({label, num(i + 1), num(p.ratios[i]), num(p.cumulative[i])});
}

void cmd_feature_pca(Run& run) {
    const auto& cfg = run.cfg();
    const Denoiser net = load_backbone(run);
    const Schedule dense = make_schedule(ScheduleKind::polynomial, cfg.get_size("analysis", "dense_steps"),
                                         cfg.get_f64("schedule", "sigma_min"), cfg.get_f64("schedule", "sigma_max"),
                                         cfg.get_f64("schedule", "rho"));
    const Tensor x_T = initial_state(cfg.seed(), cfg.get_u64("teacher", "seed_lo"), cfg.get_size("analysis", "dense_seeds"),
                                     dense[0], net.config().data_dim);
    const Trajectory traj = sample(parse_solver_kind(cfg.get("teacher", "kind")), dense, net, x_T);
    const auto table = feature_trajectory_pca(net, traj);
    CsvWriter w({"layer", "pc1", "pc1_2", "pc1_3", "pc1_4", "pc1_5", "components_90"});
    for (std::size_t l = 0; l < table.size(); ++l) {
        std::vector<std::string> row{num(l)};
        for (std::size_t i = 0; i < 5; ++i)
            row.push_back(num(table[l].cumulative[std::min(i, table[l].cumulative.size() - 1)]));
        row.push_back(num(table[l].components_for(0.9)));
        w.row(row);
    }
    run.csv("feature_pca.csv", w);
}

void cmd_film(Run& run) {
    const auto& cfg = run.cfg();
    const Denoiser net = load_backbone(run);
    const TeacherSet t = load_teacher_set(run, net);
    FilmCapacityOptions opt;
    opt.iterations = cfg.get_size("analysis", "film_iterations");
    opt.lr = cfg.get_f64("analysis", "film_lr");
    const auto rows = film_probe(net, t, cfg.get_size("analysis", "step"), sweep_grid(cfg),
                                 cfg.get_size("analysis", "substeps"), opt);
    CsvWriter w({"tau", "layer", "pre_l1", "post_l1"});
    double pre = 0.0, post = 0.0;
    for (const auto& r : rows) {
        w.row({num(r.tau), num(r.layer), num(r.pre_l1), num(r.post_l1)});
        pre += r.pre_l1;
        post += r.post_l1;
    }
    const double n = static_cast<double>(rows.size());
    double vpre = 0.0, vpost = 0.0;
    for (const auto& r : rows) {
        vpre += (r.pre_l1 - pre / n) * (r.pre_l1 - pre / n);
        vpost += (r.post_l1 - post / n) * (r.post_l1 - post / n);
    }
    CsvWriter s({"mean_pre_l1", "var_pre_l1", "mean_post_l1", "var_post_l1"});
    s.row({num(pre / n), num(vpre / n), num(post / n), num(vpost / n)});
    run.csv("film.csv", w);
    run.csv("film_summary.csv", s);
}

void cmd_emb_pca(Run& run) {
    const auto& cfg = run.cfg();
    const Denoiser net = load_backbone(run);
    const auto bank = load_bank_if_enabled(run, net, cfg.schedule());
    const EmbeddingPca r = embedding_pca(net, bank ? &*bank : nullptr, sweep_grid(cfg));
    CsvWriter w({"arm", "pc", "ratio", "cumulative"});
    write_pca_rows(w, "vanilla_embedding", r.vanilla_embedding);
    write_pca_rows(w, "vanilla_film", r.vanilla_film);
    if (r.has_bank) {
        write_pca_rows(w, "mte_embedding", r.mte_embedding);
        write_pca_rows(w, "mte_film", r.mte_film);
    }
    run.csv("emb_pca.csv", w);
}

std::string subset_label(const std::vector<std::size_t>& s) {
    if (s.empty()) return "none";
    std::string out;
    for (auto i : s) out += (out.empty() ? "" : " ") + std::to_string(i);
    return out;
}

void cmd_gain_drop(Run& run) {
    const auto& cfg = run.cfg();
    const Denoiser net = load_backbone(run);
    const EvalSetup e = eval_setup(cfg);
    const fs::path bp = require(cfg.path("bank"));
    run.input(bp);
    const EmbeddingBank bank = load_bank(bp);
    bank.check_compatible(e.schedule, net);
    const Metric metric = config_metric(cfg);
    const auto res = gain_drop(net, bank, e, parse_subsets(cfg.get("analysis", "subsets"), e.schedule.intervals()), metric);
    CsvWriter w({"subset", "m_empty", "m_subset", "m_complement", "m_full", "gain", "drop"});
    for (const auto& r : res)
        w.row({subset_label(r.subset), num(r.m_empty), num(r.m_subset), num(r.m_complement), num(r.m_full), num(r.gain),
               num(r.drop)});
    run.csv("gain_drop.csv", w);

    CsvWriter noise({"rep", "seed_lo", "m_vanilla"});
    for (std::size_t k = 0; k < cfg.get_size("analysis", "noise_reps"); ++k) {
        EvalSetup rep = e;
        rep.seed_lo = e.seed_lo + (k + 1) * e.n_samples;
        noise.row({num(k), std::to_string(rep.seed_lo), num(evaluate(net, nullptr, {}, rep, metric))});
    }
    run.csv("gain_drop_noise.csv", noise);
}

void cmd_step_transfer(Run& run) {
    const auto& cfg = run.cfg();
    const Denoiser net = load_backbone(run);
    const EvalSetup e = eval_setup(cfg);
    const fs::path bp = require(cfg.path("bank"));
    run.input(bp);
    const EmbeddingBank bank = load_bank(bp);
    bank.check_compatible(e.schedule, net);
    const Metric metric = config_metric(cfg);
    CsvWriter w({"k", "with_bank", "vanilla"});
    std::istringstream ks(cfg.get("analysis", "transfer_k"));
    std::string tok;
    while (ks >> tok) {
        const std::size_t k = static_cast<std::size_t>(std::stoull(tok));
        const TransferResult r = step_transfer(net, bank, e, k, metric);
        w.row({num(r.k), num(r.with_bank), num(r.vanilla)});
    }
    run.csv("step_transfer.csv", w);
}

struct Common {
    std::string config;
    std::vector<std::string> sets;
    std::string out;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config, "Config file ([section] / key = value)");
    app->add_option("--set", c.sets, "Override, section.key=value (repeatable)")->allow_extra_args(false);
    app->add_option("--out", c.out, "Output directory");
    app->add_option("--seed", c.seed, "Global seed");
}

RunConfig resolve(const Common& c) {
    RunConfig cfg = c.config.empty() ? RunConfig() : RunConfig::load(require(c.config));
    for (const auto& s : c.sets) cfg.set(s);
    if (!c.out.empty()) cfg.set("run", "out", c.out);
    if (c.seed) cfg.set("run", "seed", std::to_string(*c.seed));
    return cfg;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multi-layer time embedding optimization lab", "mteo-lab"};
    app.require_subcommand(1);
    Common common;
    using Fn = std::function<void(Run&)>;
    std::vector<std::pair<CLI::App*, std::pair<std::string, Fn>>> commands;
    auto add = [&](CLI::App* parent, const std::string& name, const std::string& help, const std::string& tag, Fn fn) {
        CLI::App* sub = parent->add_subcommand(name, help);
        add_common(sub, common);
        commands.push_back({sub, {tag, std::move(fn)}});
    };
    add(&app, "train-backbone", "Pretrain the denoiser on the Gaussian mixture", "train-backbone", cmd_train_backbone);
    add(&app, "gen-teachers", "Generate teacher states at the student times", "gen-teachers", cmd_gen_teachers);
    add(&app, "train-mteo", "Distill the embedding bank", "train-mteo", cmd_train_mteo);
    add(&app, "sample", "Roll out the sampler and write endpoints", "sample", cmd_sample);
    add(&app, "eval", "Distribution metrics of the sampler endpoints", "eval", cmd_eval);
    CLI::App* analyze = app.add_subcommand("analyze", "Diagnostics");
    analyze->require_subcommand(1);
    add(analyze, "sweep", "Conditioning-time sweep of one solver step", "analyze-sweep", cmd_sweep);
    add(analyze, "layer-sweep", "Per-layer conditioning-time sweeps", "analyze-layer-sweep", cmd_layer_sweep);
    add(analyze, "feature-pca", "PCA of per-layer feature trajectories", "analyze-feature-pca", cmd_feature_pca);
    add(analyze, "film", "FiLM capacity probe", "analyze-film", cmd_film);
    add(analyze, "emb-pca", "PCA of vanilla and optimized embeddings", "analyze-emb-pca", cmd_emb_pca);
    add(analyze, "gain-drop", "Step importance by enabling or removing the bank", "analyze-gain-drop", cmd_gain_drop);
    add(analyze, "step-transfer", "Apply the bank on a refined schedule", "analyze-step-transfer", cmd_step_transfer);

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }
    try {
        for (auto& [sub, cmd] : commands) {
            if (!sub->parsed()) continue;
            Run run(cmd.first, resolve(common), out);
            cmd.second(run);
            run.finish();
            return 0;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    err << "error: no command given\n";
    return 2;
}

}  // namespace mteo
