// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mteo/backbone.hpp"
#include "mteo/denoiser.hpp"
#include "mteo/gmm.hpp"
#include "mteo/schedule.hpp"
#include "mteo/solvers.hpp"
#include "mteo/trainer.hpp"

namespace mteo {

/// Sectioned key/value document with a fixed schema. Every key has a default;
/// unknown sections or keys are rejected.
class RunConfig {
public:
    /// All defaults.
    RunConfig();

    static RunConfig parse(const std::string& text, const std::string& origin = "<config>");
    static RunConfig load(const std::filesystem::path& path);

    /// Applies one "section.key=value" assignment.
    void set(const std::string& assignment);
    void set(const std::string& section, const std::string& key, const std::string& value);

    const std::string& get(const std::string& section, const std::string& key) const;
    double get_f64(const std::string& section, const std::string& key) const;
    std::uint64_t get_u64(const std::string& section, const std::string& key) const;
    std::size_t get_size(const std::string& section, const std::string& key) const {
        return static_cast<std::size_t>(get_u64(section, key));
    }
    bool get_bool(const std::string& section, const std::string& key) const;

    /// Canonical text form: every section and key in schema order.
    std::string dump() const;

    GmmSpec gmm() const;
    NetConfig net() const;
    TrainBackboneConfig backbone() const;
    Schedule schedule() const;
    SolverKind solver() const;
    MteoConfig mteo() const;
    BankVariant variant() const;

    std::uint64_t seed() const { return get_u64("run", "seed"); }
    std::filesystem::path out_dir() const { return get("run", "out"); }
    /// Artifact path from [paths]; relative paths resolve against the output directory.
    std::filesystem::path path(const std::string& key) const;

private:
    std::map<std::string, std::map<std::string, std::string>> values_;
};

/// "0;1;2" style subset list. "singletons" expands to every single step, "all" to the full set,
/// and "none" to the empty set; entries inside a subset are separated by spaces.
std::vector<std::vector<std::size_t>> parse_subsets(const std::string& spec, std::size_t n_steps);

}  // namespace mteo
