// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace mteo {

enum class ScheduleKind { polynomial, logsnr, sigma_uniform };

std::string to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(const std::string& s);

/// Strictly decreasing noise levels t_0 = sigma_max > ... > t_{N-1} = sigma_min.
struct Schedule {
    std::vector<double> times;
    ScheduleKind kind = ScheduleKind::polynomial;
    double rho = 7.0;
    double sigma_min = 0.002;
    double sigma_max = 80.0;

    std::size_t size() const { return times.size(); }
    std::size_t intervals() const { return times.empty() ? 0 : times.size() - 1; }
    double operator[](std::size_t i) const { return times[i]; }

    /// Coordinate in which this schedule is uniformly spaced.
    double warp(double t) const;
    double unwarp(double w) const;

    /// Hash of the exact time values.
    std::uint64_t fingerprint() const;
};

Schedule make_schedule(ScheduleKind kind, std::size_t n, double sigma_min = 0.002, double sigma_max = 80.0,
                       double rho = 7.0);

/// Splits every interval into k equal pieces in warp space. Original times are kept bitwise.
Schedule refine_schedule(const Schedule& student, std::size_t k);

/// Throws unless the schedule is strictly decreasing, positive and has >= 2 points.
void validate(const Schedule& s);

/// Index of `t` in `s.times` (bitwise match), or s.size() if absent.
std::size_t find_time(const Schedule& s, double t);

}  // namespace mteo
