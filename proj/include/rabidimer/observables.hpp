// observables.hpp - imbalance, time averages and run summaries

#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "rabidimer/errors.hpp"
#include "rabidimer/propagate.hpp"

namespace rabidimer {

namespace detail {

inline void require_same_grid(const TimeSeries& a, const TimeSeries& b) {
    if (a.times.size() != b.times.size() || a.values.size() != a.times.size() || b.values.size() != b.times.size())
        throw ConfigError("time series '" + a.label + "' and '" + b.label + "' have different lengths");
    for (std::size_t i = 0; i < a.times.size(); ++i)
        if (a.times[i] != b.times[i])
            throw ConfigError("time series '" + a.label + "' and '" + b.label + "' use different grids");
}

}  // namespace detail

// z(t) = N_L(t) - N_R(t)
inline TimeSeries imbalance(const TimeSeries& n_left, const TimeSeries& n_right) {
    detail::require_same_grid(n_left, n_right);
    TimeSeries z{n_left.times, std::vector<double>(n_left.size()), "z"};
    for (std::size_t i = 0; i < z.size(); ++i) z.values[i] = n_left.values[i] - n_right.values[i];
    return z;
}

struct NormalizedImbalance {
    TimeSeries series;                 // NaN where the denominator vanishes
    std::vector<std::size_t> flagged;  // sample indices with N_L + N_R <= min_total
};

// z_norm(t) = (N_L - N_R) / (N_L + N_R)
inline NormalizedImbalance normalized_imbalance(const TimeSeries& n_left, const TimeSeries& n_right,
                                                double min_total = 1e-9) {
    detail::require_same_grid(n_left, n_right);
    NormalizedImbalance out;
    out.series = {n_left.times, std::vector<double>(n_left.size()), "z_norm"};
    for (std::size_t i = 0; i < n_left.size(); ++i) {
        const double tot = n_left.values[i] + n_right.values[i];
        if (tot <= min_total) {
            out.series.values[i] = std::numeric_limits<double>::quiet_NaN();
            out.flagged.push_back(i);
        } else {
            out.series.values[i] = (n_left.values[i] - n_right.values[i]) / tot;
        }
    }
    return out;
}

namespace detail {

// Linear interpolation of the series at t (inside the grid).
inline double value_at(const TimeSeries& s, double t) {
    const auto it = std::lower_bound(s.times.begin(), s.times.end(), t);
    const auto i = static_cast<std::size_t>(it - s.times.begin());
    if (i < s.size() && s.times[i] == t) return s.values[i];
    const double w = (t - s.times[i - 1]) / (s.times[i] - s.times[i - 1]);
    return (1.0 - w) * s.values[i - 1] + w * s.values[i];
}

// Trapezoidal integral of f(value) over [t0, t1].
template <typename F>
double integrate(const TimeSeries& s, double t0, double t1, F f) {
    if (s.size() < 2) throw ConfigError("time average of '" + s.label + "' needs at least two samples");
    if (!(t0 < t1) || t0 < s.times.front() || t1 > s.times.back())
        throw ConfigError("averaging window outside the grid of '" + s.label + "'");
    double acc = 0.0;
    double ta = t0, fa = f(value_at(s, t0));
    auto it = std::upper_bound(s.times.begin(), s.times.end(), t0);
    for (; it != s.times.end() && *it < t1; ++it) {
        const double fb = f(s.values[static_cast<std::size_t>(it - s.times.begin())]);
        acc += 0.5 * (fa + fb) * (*it - ta);
        ta = *it;
        fa = fb;
    }
    acc += 0.5 * (fa + f(value_at(s, t1))) * (t1 - ta);
    return acc;
}

}  // namespace detail

// (1 / (t1 - t0)) * integral of the series over [t0, t1], trapezoidal.
// t1 defaults to the last sample.
inline double time_average(const TimeSeries& s, double t_start = 0.0, double t_end = -1.0) {
    if (s.size() == 0) throw ConfigError("time average of an empty series");
    if (t_end < 0.0) t_end = s.times.back();
    if (!(t_start < t_end)) throw ConfigError("time_average needs t_start < t_final");
    return detail::integrate(s, t_start, t_end, [](double v) { return v; }) / (t_end - t_start);
}

// RMS deviation from the window mean.
inline double time_rms(const TimeSeries& s, double t_start = 0.0, double t_end = -1.0) {
    if (s.size() == 0) throw ConfigError("time average of an empty series");
    if (t_end < 0.0) t_end = s.times.back();
    const double mean = time_average(s, t_start, t_end);
    const double ms =
        detail::integrate(s, t_start, t_end, [mean](double v) { return (v - mean) * (v - mean); }) / (t_end - t_start);
    return std::sqrt(std::max(0.0, ms));
}

inline double max_abs(const TimeSeries& s) {
    double m = 0.0;
    for (double v : s.values) m = std::max(m, std::abs(v));
    return m;
}

// --------------------------------------------------------------------------
// Run summary

struct SummaryOptions {
    double transient_end = 100.0;  // eruption window [0, transient_end]
    double average_start = 0.0;    // start of the z_avg / sigma_z window
};

struct ImbalanceSummary {
    int n_i = 0;
    int n_sites = 2;
    double z_avg = 0.0;
    double z_fluct = 0.0;       // RMS of z(t) - z_avg
    double n_tot_mean = 0.0;
    double delta_n = 0.0;       // time-averaged photon excess per cavity over the transient window
    double delta_n_peak = 0.0;  // max N_tot - n_i over the same window
    std::vector<double> sigma_z_mean;  // per site
    double window_start = 0.0;
    double window_end = 0.0;
};

// Summarizes traces labelled N_L, N_R, sz_L, sz_R (or N, sz on one site).
inline ImbalanceSummary summarize(const std::vector<TimeSeries>& traces, int n_i, SummaryOptions opt = {}) {
    auto find = [&](const std::string& label) -> const TimeSeries* {
        for (const auto& s : traces)
            if (s.label == label) return &s;
        return nullptr;
    };
    ImbalanceSummary out;
    out.n_i = n_i;
    std::vector<const TimeSeries*> n, sz;
    if (find("N_L")) {
        out.n_sites = 2;
        n = {find("N_L"), find("N_R")};
        sz = {find("sz_L"), find("sz_R")};
    } else {
        out.n_sites = 1;
        n = {find("N")};
        sz = {find("sz")};
    }
    for (const auto* p : n)
        if (!p) throw ConfigError("summarize: missing photon-number trace");
    for (std::size_t k = 1; k < n.size(); ++k) detail::require_same_grid(*n[0], *n[k]);

    TimeSeries total{n[0]->times, n[0]->values, "N_tot"};
    for (std::size_t k = 1; k < n.size(); ++k)
        for (std::size_t i = 0; i < total.size(); ++i) total.values[i] += n[k]->values[i];
    const TimeSeries z = out.n_sites == 2 ? imbalance(*n[0], *n[1]) : TimeSeries{total.times, total.values, "z"};

    out.window_start = opt.average_start;
    out.window_end = z.times.back();
    out.z_avg = time_average(z, opt.average_start);
    out.z_fluct = time_rms(z, opt.average_start);
    out.n_tot_mean = time_average(total, opt.average_start);

    const double t_tr = std::min(opt.transient_end, total.times.back());
    out.delta_n = (time_average(total, 0.0, t_tr) - n_i) / out.n_sites;
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < total.size() && total.times[i] <= t_tr; ++i) peak = std::max(peak, total.values[i]);
    out.delta_n_peak = peak - n_i;

    for (const auto* p : sz)
        if (p) out.sigma_z_mean.push_back(time_average(*p, opt.average_start));
    return out;
}

inline nlohmann::json to_json(const ImbalanceSummary& s) {
    return {{"n_i", s.n_i},
            {"n_sites", s.n_sites},
            {"z_avg", s.z_avg},
            {"z_avg_over_n_i", s.n_i > 0 ? nlohmann::json(s.z_avg / s.n_i) : nlohmann::json(nullptr)},
            {"z_fluct", s.z_fluct},
            {"n_tot_mean", s.n_tot_mean},
            {"delta_n", s.delta_n},
            {"delta_n_peak", s.delta_n_peak},
            {"sigma_z_mean", s.sigma_z_mean},
            {"window", {s.window_start, s.window_end}}};
}

}  // namespace rabidimer
