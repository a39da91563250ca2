#pragma once

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "tablebench/error.hpp"

namespace tablebench {

// ---------------------------------------------------------------------------
// Two-sample t-test
// ---------------------------------------------------------------------------

enum class TTestVariant {
    Student,  // equal-variance pooled test (default)
    Welch,    // unequal-variance, Welch-Satterthwaite dof
};

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
};

namespace detail {

struct SampleStats {
    double mean = 0.0;
    double variance = 0.0;  // sample variance, n-1 denominator
    double n = 0.0;
};

inline SampleStats sample_stats(std::span<const double> xs) {
    SampleStats s;
    s.n = static_cast<double>(xs.size());
    for (double x : xs) s.mean += x;
    s.mean /= s.n;
    for (double x : xs) s.variance += (x - s.mean) * (x - s.mean);
    s.variance /= (s.n - 1.0);
    return s;
}

inline double two_sided_p(double t, double dof) {
    boost::math::students_t_distribution<double> dist(dof);
    return 2.0 * boost::math::cdf(dist, -std::abs(t));
}

}  // namespace detail

/// Two-sided independent two-sample t-test. The default equal-variance
/// (pooled) variant matches the usual library default; Welch is available by
/// flag. Requires at least 2 observations per group and nonzero pooled
/// variance.
inline TTestResult t_test(std::span<const double> a, std::span<const double> b,
                          TTestVariant variant = TTestVariant::Student) {
    if (a.size() < 2 || b.size() < 2)
        throw Error("t_test requires at least 2 observations per group");
    auto sa = detail::sample_stats(a);
    auto sb = detail::sample_stats(b);
    if (sa.variance == 0.0 && sb.variance == 0.0)
        throw DegenerateVarianceError("both samples have zero variance");

    TTestResult r;
    if (variant == TTestVariant::Student) {
        const double dof = sa.n + sb.n - 2.0;
        const double pooled =
            ((sa.n - 1.0) * sa.variance + (sb.n - 1.0) * sb.variance) / dof;
        r.t = (sa.mean - sb.mean) / std::sqrt(pooled * (1.0 / sa.n + 1.0 / sb.n));
        r.p = detail::two_sided_p(r.t, dof);
    } else {
        const double va = sa.variance / sa.n;
        const double vb = sb.variance / sb.n;
        const double dof =
            (va + vb) * (va + vb) / (va * va / (sa.n - 1.0) + vb * vb / (sb.n - 1.0));
        r.t = (sa.mean - sb.mean) / std::sqrt(va + vb);
        r.p = detail::two_sided_p(r.t, dof);
    }
    return r;
}

inline TTestResult t_test(const std::vector<double>& a, const std::vector<double>& b,
                          TTestVariant variant = TTestVariant::Student) {
    return t_test(std::span<const double>(a), std::span<const double>(b), variant);
}

/// Bonferroni-corrected significance threshold: alpha / m.
inline double bonferroni_threshold(double alpha, int m) {
    if (m < 1) throw Error("bonferroni_threshold requires m >= 1");
    return alpha / static_cast<double>(m);
}

// ---------------------------------------------------------------------------
// Delta tables
// ---------------------------------------------------------------------------

/// One significance comparison between two per-instance score vectors.
struct Comparison {
    std::vector<double> group_a;
    std::vector<double> group_b;
    double t_stat = 0.0;
    double p_value = 1.0;
    int m = 1;
    double alpha = 0.01;
    bool significant = false;
};

inline Comparison compare(std::vector<double> group_a, std::vector<double> group_b, double alpha,
                          int m, TTestVariant variant = TTestVariant::Student) {
    Comparison c;
    c.group_a = std::move(group_a);
    c.group_b = std::move(group_b);
    c.alpha = alpha;
    c.m = m;
    try {
        TTestResult r = t_test(c.group_a, c.group_b, variant);
        c.t_stat = r.t;
        c.p_value = r.p;
    } catch (const DegenerateVarianceError&) {
        // identical constant groups: no evidence of a difference
        c.t_stat = 0.0;
        c.p_value = 1.0;
    }
    c.significant = c.p_value < bonferroni_threshold(alpha, m);
    return c;
}

/// Per-instance scores for one report cell, in [0, 1].
struct ScoreSamples {
    std::vector<double> per_instance;

    double mean() const {
        if (per_instance.empty()) return 0.0;
        double s = 0;
        for (double x : per_instance) s += x;
        return s / static_cast<double>(per_instance.size());
    }

    double mean_pct() const { return 100.0 * mean(); }
};

struct DeltaCell {
    double delta_pct = 0.0;  // noisy - baseline, percentage points
    double p_value = 1.0;
    bool significant = false;
};

/// Deltas between a baseline and a noisy condition over identical cell keys.
/// Significance is tested per cell with m simultaneous comparisons.
inline std::map<std::string, DeltaCell> delta_table(
    const std::map<std::string, ScoreSamples>& baseline,
    const std::map<std::string, ScoreSamples>& noisy, double alpha = 0.01, int m = 8) {
    if (baseline.size() != noisy.size())
        throw Error("delta_table: baseline and noisy cover different cells");
    std::map<std::string, DeltaCell> out;
    for (const auto& [key, base] : baseline) {
        auto it = noisy.find(key);
        if (it == noisy.end()) throw Error("delta_table: missing noisy cell \"" + key + "\"");
        const ScoreSamples& noise = it->second;
        DeltaCell cell;
        cell.delta_pct = noise.mean_pct() - base.mean_pct();
        Comparison c = compare(noise.per_instance, base.per_instance, alpha, m);
        cell.p_value = c.p_value;
        cell.significant = c.significant;
        out[key] = cell;
    }
    return out;
}

}  // namespace tablebench
