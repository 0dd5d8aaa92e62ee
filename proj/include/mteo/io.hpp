// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mteo/bank.hpp"
#include "mteo/denoiser.hpp"
#include "mteo/schedule.hpp"
#include "mteo/teacher.hpp"

namespace mteo {

inline constexpr char kContainerMagic[8] = {'M', 'T', 'E', 'O', 'L', 'A', 'B', '\0'};
inline constexpr std::uint32_t kContainerVersion = 1;

/// Generic artifact: ordered UTF-8 metadata plus named f64 tensors.
struct Container {
    std::vector<std::pair<std::string, std::string>> header;
    std::vector<std::pair<std::string, Tensor>> tensors;

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;
    const std::string& get(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    double get_f64(const std::string& key) const;

    void add(const std::string& name, Tensor t);
    const Tensor& tensor(const std::string& name) const;

    friend bool operator==(const Container&, const Container&) = default;
};

std::string encode_container(const Container& c);
Container decode_container(std::string_view bytes);

/// Writes to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

void write_container(const std::filesystem::path& path, const Container& c);
Container read_container(const std::filesystem::path& path);

/// Exact decimal round trip of a double.
std::string format_double(double v);
double parse_double(const std::string& s);
std::string hex64(std::uint64_t v);

Container to_container(const Denoiser& net);
Denoiser denoiser_from(const Container& c);
Container to_container(const EmbeddingBank& bank, const Schedule& schedule);
/// Reads a bank and the schedule it was trained on.
EmbeddingBank bank_from(const Container& c, Schedule* schedule = nullptr);
Container to_container(const TeacherSet& set);
TeacherSet teachers_from(const Container& c);

void save_denoiser(const std::filesystem::path& path, const Denoiser& net);
Denoiser load_denoiser(const std::filesystem::path& path);
void save_bank(const std::filesystem::path& path, const EmbeddingBank& bank, const Schedule& schedule);
EmbeddingBank load_bank(const std::filesystem::path& path, Schedule* schedule = nullptr);
void save_teachers(const std::filesystem::path& path, const TeacherSet& set);
TeacherSet load_teachers(const std::filesystem::path& path);

/// Row-oriented CSV with a header, ',' separator and LF endings.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> columns);
    CsvWriter& row(const std::vector<std::string>& cells);
    std::size_t rows() const { return rows_; }
    const std::string& str() const { return text_; }
    void save(const std::filesystem::path& path) const;

private:
    std::size_t n_cols_;
    std::size_t rows_ = 0;
    std::string text_;
};

}  // namespace mteo
