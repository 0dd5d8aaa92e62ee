// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mteo/config.hpp"

#include <charconv>
#include <sstream>

#include "mteo/io.hpp"

namespace mteo {

namespace {

struct Entry {
    const char* section;
    const char* key;
    const char* value;
};

// Order here is the dump order.
constexpr Entry kSchema[] = {
    {"run", "seed", "0"},
    {"run", "out", "out"},

    {"data", "components", "8"},
    {"data", "radius", "8"},
    {"data", "std", "0.5"},

    {"net", "data_dim", "2"},
    {"net", "n_blocks", "6"},
    {"net", "hidden", "64"},
    {"net", "embed_dim", "32"},
    {"net", "n_fourier", "16"},
    {"net", "sigma_data", "0.5"},

    {"backbone", "n_samples", "8192"},
    {"backbone", "epochs", "300"},
    {"backbone", "batch", "256"},
    {"backbone", "lr", "0.002"},
    {"backbone", "lr_min", "0.0001"},
    {"backbone", "p_mean", "-0.6931471805599453"},
    {"backbone", "p_std", "1.2"},
    {"backbone", "p_uniform", "0.5"},
    {"backbone", "sigma_min", "0.002"},
    {"backbone", "sigma_max", "80"},

    {"schedule", "kind", "polynomial"},
    {"schedule", "steps", "5"},
    {"schedule", "sigma_min", "0.002"},
    {"schedule", "sigma_max", "80"},
    {"schedule", "rho", "7"},

    {"solver", "kind", "ddim"},

    {"teacher", "k", "5"},
    {"teacher", "kind", "ipndm"},
    {"teacher", "seed_lo", "50000"},
    {"teacher", "seed_hi", "50255"},

    {"mteo", "variant", "multi-layer"},
    {"mteo", "lr", "0.02"},
    {"mteo", "lr_min", "0.001"},
    {"mteo", "eps", "0.01"},
    {"mteo", "eps_min", "0.001"},
    {"mteo", "patience", "10"},
    {"mteo", "e_max", "300"},
    {"mteo", "batch", "64"},
    {"mteo", "prev_mode", "rolling"},

    {"eval", "n_samples", "4000"},
    {"eval", "seed_lo", "1000000"},
    {"eval", "n_ref", "20000"},
    {"eval", "n_proj", "64"},
    {"eval", "use_bank", "true"},

    {"analysis", "step", "0"},
    {"analysis", "grid_points", "121"},
    {"analysis", "substeps", "10"},
    {"analysis", "dense_steps", "61"},
    {"analysis", "dense_seeds", "64"},
    {"analysis", "film_iterations", "300"},
    {"analysis", "film_lr", "0.01"},
    {"analysis", "subsets", "none;singletons;all"},
    {"analysis", "transfer_k", "1 2 3"},
    {"analysis", "noise_reps", "5"},

    {"paths", "backbone", "backbone.ckpt"},
    {"paths", "teachers", "teachers.bin"},
    {"paths", "bank", "bank.bin"},
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig::RunConfig() {
    for (const auto& e : kSchema) values_[e.section][e.key] = e.value;
}

RunConfig RunConfig::parse(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = origin + ":" + std::to_string(lineno);
        if (line.front() == '[') {
            if (line.back() != ']') throw Error(where + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (!cfg.values_.contains(section)) throw Error(where + ": unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw Error(where + ": expected 'key = value'");
        if (section.empty()) throw Error(where + ": key outside of any section");
        try {
            cfg.set(section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const Error& e) {
            throw Error(where + ": " + e.what());
        }
    }
    return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) { return parse(read_file(path), path.string()); }

void RunConfig::set(const std::string& assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
        throw Error("override '" + assignment + "' must look like section.key=value");
    set(trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)), trim(assignment.substr(eq + 1)));
}

void RunConfig::set(const std::string& section, const std::string& key, const std::string& value) {
    auto s = values_.find(section);
    if (s == values_.end()) throw Error("unknown section [" + section + "]");
    auto k = s->second.find(key);
    if (k == s->second.end()) throw Error("unknown key '" + key + "' in [" + section + "]");
    if (value.find_first_of("\n\r") != std::string::npos) throw Error("value for " + section + "." + key + " spans lines");
    k->second = value;
}

const std::string& RunConfig::get(const std::string& section, const std::string& key) const {
    auto s = values_.find(section);
    if (s == values_.end()) throw Error("unknown section [" + section + "]");
    auto k = s->second.find(key);
    if (k == s->second.end()) throw Error("unknown key '" + key + "' in [" + section + "]");
    return k->second;
}

double RunConfig::get_f64(const std::string& section, const std::string& key) const {
    try {
        return parse_double(get(section, key));
    } catch (const Error& e) {
        throw Error(section + "." + key + ": " + e.what());
    }
}

std::uint64_t RunConfig::get_u64(const std::string& section, const std::string& key) const {
    const std::string& s = get(section, key);
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw Error(section + "." + key + ": '" + s + "' is not a non-negative integer");
    return v;
}

bool RunConfig::get_bool(const std::string& section, const std::string& key) const {
    const std::string& s = get(section, key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw Error(section + "." + key + ": '" + s + "' is not a boolean");
}

std::string RunConfig::dump() const {
    std::string out;
    std::string section;
    for (const auto& e : kSchema) {
        if (section != e.section) {
            if (!section.empty()) out += '\n';
            section = e.section;
            out += "[" + section + "]\n";
        }
        out += std::string(e.key) + " = " + get(e.section, e.key) + "\n";
    }
    return out;
}

GmmSpec RunConfig::gmm() const {
    GmmSpec g = GmmSpec::circle(get_size("data", "components"), get_f64("data", "radius"), get_f64("data", "std"));
    g.validate();
    return g;
}

NetConfig RunConfig::net() const {
    NetConfig n;
    n.data_dim = get_size("net", "data_dim");
    n.n_blocks = get_size("net", "n_blocks");
    n.hidden = get_size("net", "hidden");
    n.embed_dim = get_size("net", "embed_dim");
    n.n_fourier = get_size("net", "n_fourier");
    n.sigma_data = get_f64("net", "sigma_data");
    n.validate();
    return n;
}

TrainBackboneConfig RunConfig::backbone() const {
    TrainBackboneConfig b;
    b.n_samples = get_size("backbone", "n_samples");
    b.epochs = get_size("backbone", "epochs");
    b.batch = get_size("backbone", "batch");
    b.lr = get_f64("backbone", "lr");
    b.lr_min = get_f64("backbone", "lr_min");
    b.p_mean = get_f64("backbone", "p_mean");
    b.p_std = get_f64("backbone", "p_std");
    b.p_uniform = get_f64("backbone", "p_uniform");
    b.sigma_min = get_f64("backbone", "sigma_min");
    b.sigma_max = get_f64("backbone", "sigma_max");
    b.seed = seed();
    b.validate();
    return b;
}

Schedule RunConfig::schedule() const {
    return make_schedule(parse_schedule_kind(get("schedule", "kind")), get_size("schedule", "steps"),
                         get_f64("schedule", "sigma_min"), get_f64("schedule", "sigma_max"), get_f64("schedule", "rho"));
}

SolverKind RunConfig::solver() const { return parse_solver_kind(get("solver", "kind")); }

MteoConfig RunConfig::mteo() const {
    MteoConfig m;
    m.lr = get_f64("mteo", "lr");
    m.lr_min = get_f64("mteo", "lr_min");
    m.eps = get_f64("mteo", "eps");
    m.eps_min = get_f64("mteo", "eps_min");
    m.patience = get_size("mteo", "patience");
    m.e_max = get_size("mteo", "e_max");
    m.batch = get_size("mteo", "batch");
    m.prev_mode = parse_prev_mode(get("mteo", "prev_mode"));
    m.seed = seed();
    m.validate();
    return m;
}

BankVariant RunConfig::variant() const { return parse_bank_variant(get("mteo", "variant")); }

std::filesystem::path RunConfig::path(const std::string& key) const {
    std::filesystem::path p = get("paths", key);
    return p.is_absolute() ? p : out_dir() / p;
}

std::vector<std::vector<std::size_t>> parse_subsets(const std::string& spec, std::size_t n_steps) {
    std::vector<std::vector<std::size_t>> out;
    std::istringstream groups(spec);
    std::string group;
    while (std::getline(groups, group, ';')) {
        group = trim(group);
        if (group.empty()) continue;
        if (group == "none") {
            out.emplace_back();
        } else if (group == "all") {
            std::vector<std::size_t> all(n_steps);
            for (std::size_t i = 0; i < n_steps; ++i) all[i] = i;
            out.push_back(std::move(all));
        } else if (group == "singletons") {
            for (std::size_t i = 0; i < n_steps; ++i) out.push_back({i});
        } else {
            std::istringstream items(group);
            std::vector<std::size_t> s;
            std::string tok;
            while (items >> tok) {
                std::size_t v = 0;
                auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
                if (ec != std::errc() || p != tok.data() + tok.size()) throw Error("subset entry '" + tok + "' is not an index");
                if (v >= n_steps) throw Error("subset entry " + tok + " is outside 0.." + std::to_string(n_steps - 1));
                s.push_back(v);
            }
            out.push_back(std::move(s));
        }
    }
    return out;
}

}  // namespace mteo
