// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mteo/schedule.hpp"

#include <cmath>
#include <cstring>

#include "mteo/rng.hpp"
#include "mteo/tensor.hpp"

namespace mteo {

std::string to_string(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::polynomial: return "polynomial";
        case ScheduleKind::logsnr: return "logsnr";
        case ScheduleKind::sigma_uniform: return "sigma-uniform";
    }
    return "unknown";
}

ScheduleKind parse_schedule_kind(const std::string& s) {
    if (s == "polynomial" || s == "poly") return ScheduleKind::polynomial;
    if (s == "logsnr") return ScheduleKind::logsnr;
    if (s == "sigma-uniform" || s == "sigma_uniform" || s == "uniform") return ScheduleKind::sigma_uniform;
    throw Error("unknown schedule kind '" + s + "'");
}

double Schedule::warp(double t) const {
    switch (kind) {
        case ScheduleKind::polynomial: return std::pow(t, 1.0 / rho);
        case ScheduleKind::logsnr: return std::log(t);
        case ScheduleKind::sigma_uniform: return t;
    }
    return t;
}

double Schedule::unwarp(double w) const {
    switch (kind) {
        case ScheduleKind::polynomial: return std::pow(w, rho);
        case ScheduleKind::logsnr: return std::exp(w);
        case ScheduleKind::sigma_uniform: return w;
    }
    return w;
}

std::uint64_t Schedule::fingerprint() const {
    std::uint64_t h = fnv1a(to_string(kind));
    for (double t : times) {
        std::uint64_t bits;
        std::memcpy(&bits, &t, sizeof bits);
        h = splitmix64(h ^ bits);
    }
    return h;
}

void validate(const Schedule& s) {
    if (s.times.size() < 2) throw Error("schedule: needs at least 2 time points");
    for (std::size_t i = 0; i < s.times.size(); ++i) {
        if (!(s.times[i] > 0.0) || !std::isfinite(s.times[i]))
            throw Error("schedule: time " + std::to_string(i) + " is not a positive finite value");
        if (i > 0 && !(s.times[i] < s.times[i - 1]))
            throw Error("schedule: times are not strictly decreasing at index " + std::to_string(i));
    }
}

Schedule make_schedule(ScheduleKind kind, std::size_t n, double sigma_min, double sigma_max, double rho) {
    if (n < 2) throw Error("make_schedule: N must be >= 2, got " + std::to_string(n));
    if (!(sigma_min > 0.0) || !(sigma_max > sigma_min))
        throw Error("make_schedule: need 0 < sigma_min < sigma_max");
    if (kind == ScheduleKind::polynomial && !(rho > 0.0)) throw Error("make_schedule: rho must be positive");

    Schedule s;
    s.kind = kind;
    s.rho = kind == ScheduleKind::polynomial ? rho : 1.0;
    s.sigma_min = sigma_min;
    s.sigma_max = sigma_max;
    s.times.resize(n);
    const double w_max = s.warp(sigma_max);
    const double w_min = s.warp(sigma_min);
    for (std::size_t i = 0; i < n; ++i) {
        const double frac = static_cast<double>(i) / static_cast<double>(n - 1);
        s.times[i] = s.unwarp(w_max + frac * (w_min - w_max));
    }
    s.times.front() = sigma_max;
    s.times.back() = sigma_min;
    validate(s);
    return s;
}

Schedule refine_schedule(const Schedule& student, std::size_t k) {
    if (k < 1) throw Error("refine_schedule: k must be >= 1");
    validate(student);
    Schedule out = student;
    out.times.clear();
    out.times.reserve(student.intervals() * k + 1);
    for (std::size_t j = 0; j + 1 < student.size(); ++j) {
        const double w0 = student.warp(student.times[j]);
        const double w1 = student.warp(student.times[j + 1]);
        out.times.push_back(student.times[j]);
        for (std::size_t q = 1; q < k; ++q) {
            const double frac = static_cast<double>(q) / static_cast<double>(k);
            out.times.push_back(student.unwarp(w0 + frac * (w1 - w0)));
        }
    }
    out.times.push_back(student.times.back());
    validate(out);
    return out;
}

std::size_t find_time(const Schedule& s, double t) {
    for (std::size_t i = 0; i < s.times.size(); ++i)
        if (std::memcmp(&s.times[i], &t, sizeof t) == 0) return i;
    return s.times.size();
}

}  // namespace mteo
