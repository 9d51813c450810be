#pragma once

#include "seqratio/design.hpp"
#include "seqratio/sampling.hpp"
#include "seqratio/special.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>

namespace seqratio {

struct RatioScale {
    double ratio;
    double scale;
};

// (r, s) for RR/LRR, (r*, s*) for OR/LOR.
inline RatioScale ratio_scale(Kind kind, double p1, double p2)
{
    if (constants(kind).factory) {
        const double q1 = p1 * (1.0 - p1);
        const double q2 = p2 * (1.0 - p2);
        return {q1 / q2, std::sqrt(q1 * q2)};
    }
    return {p1 / p2, std::sqrt(p1 * p2)};
}

// p1 = s*sqrt(r), p2 = s/sqrt(r)
inline std::pair<double, double> probs_from_ratio_scale(double ratio, double scale)
{
    const double sr = std::sqrt(ratio);
    return {scale * sr, scale / sr};
}

namespace detail {

// 1/tarvar + kappa*n + c1 + delta
inline double size_lead(Kind kind, double tarvar, double n, double susrou = 1.0)
{
    const auto k = constants(kind);
    return 1.0 / tarvar + k.stage1_cost * n + k.c1 + susrou;
}

// t + sqrt(t^2 + c) without cancellation for t < 0
inline double plus_root(double t, double c)
{
    const double rt = std::sqrt(t * t + c);
    return t >= 0.0 ? t + rt : c / (rt - t);
}

} // namespace detail

// Normalized bound on E[n_i]*s (or s*) for population pop.
inline double avg_size_bound(Kind kind, double tarvar, double tarsara, double ratio, PopulationId pop)
{
    const double n = static_cast<double>(select_suf1(tarvar, kind));
    const double x = tarsara * ratio;
    const double base = detail::size_lead(kind, tarvar, n) * (1.0 / std::sqrt(x) + std::sqrt(x));
    return pop == PopulationId::Pop1 ? base * std::sqrt(tarsara) : base / std::sqrt(tarsara);
}

inline double efficiency_bound_element(Kind kind, double tarvar, double tarsara, double ratio, double scale)
{
    const double n = static_cast<double>(select_suf1(tarvar, kind));
    const double lead = 1.0 / (tarvar * detail::size_lead(kind, tarvar, n));
    if (constants(kind).factory)
        return lead;
    const double x = tarsara * ratio;
    const double loss = scale * (1.0 / std::sqrt(tarsara) + std::sqrt(tarsara)) /
                        (1.0 / std::sqrt(x) + std::sqrt(x));
    return lead * (1.0 - loss);
}

// Normalized stage-1 ratio at which the two populations' group demands cross.
inline double crossing_ratio(Kind kind, std::uint64_t suf1, double tarsara, double ratio)
{
    if (suf1 < 3)
        throw DomainError("crossing ratio needs suf1 >= 3");
    const auto k = constants(kind);
    const double n = static_cast<double>(suf1);
    const double x = tarsara * ratio;
    if (k.factory) {
        const double c = 4.0 * x * (n - 1.0) * (n - 1.0) / (n * n);
        return n / (2.0 * x * (n - 1.0)) * detail::plus_root(x - 1.0, c);
    }
    const double d = k.c1 - k.c2;
    const double c = 4.0 * x * (n - 1.0) * (n + d - 1.0) / (n * (n + d));
    return (n + d) / (2.0 * x * (n - 1.0)) * detail::plus_root(x - 1.0, c);
}

// E[G]*s with the max() term dropped: half-sum of the per-population demands.
inline double expected_groups_half_sum(Kind kind, double tarvar, double m1, double m2, double ratio)
{
    const double n = static_cast<double>(select_suf1(tarvar, kind));
    const double sr = std::sqrt(ratio);
    return detail::size_lead(kind, tarvar, n) * (1.0 / (m1 * sr) + sr / m2);
}

// Normalized expected group count E[G]*s (s* for OR/LOR).
inline double expected_groups_approx(Kind kind, double tarvar, double m1, double m2, double ratio)
{
    const auto k = constants(kind);
    const std::uint64_t suf1 = select_suf1(tarvar, kind);
    const double n = static_cast<double>(suf1);
    const double sr = std::sqrt(ratio);
    const double wn = crossing_ratio(kind, suf1, m1 / m2, ratio);
    double corr;
    if (k.factory) {
        const double lw = (n - 1.0) * std::log(wn) - (2.0 * n - 1.0) * std::log1p(wn) -
                          log_beta(n, n) - std::log(n);
        corr = std::exp(lw) * (1.0 / (m1 * sr) + wn * sr / m2);
    } else {
        const double d = k.c1 - k.c2;
        const double lw = (n + d - 1.0) * std::log(wn) - (2.0 * n + d - 1.0) * std::log1p(wn) -
                          log_beta(n + d, n);
        corr = std::exp(lw) * (1.0 / (n * m1 * sr) + wn * sr / ((n + d) * m2));
    }
    return detail::size_lead(kind, tarvar, n) * (1.0 / (m1 * sr) + sr / m2 + corr);
}

inline double efficiency_group_approx(Kind kind, double tarvar, double m1, double m2, double p1, double p2)
{
    const auto rs = ratio_scale(kind, p1, p2);
    const double sr = std::sqrt(rs.ratio);
    const double num = constants(kind).factory
                           ? 1.0 / (m1 * sr) + sr / m2
                           : (1.0 - p1) / (m1 * sr) + (1.0 - p2) * sr / m2;
    return num / (tarvar * expected_groups_approx(kind, tarvar, m1, m2, rs.ratio));
}

// Bound on the conditional (relative) MSE given the rounded second-stage
// parameters. RR and OR use the p-dependent forms; LRR and LOR fall back to
// the uniform error function.
inline double conditional_mse_bound(Kind kind, std::uint64_t sus1, std::uint64_t sus2, double p1, double p2)
{
    const double n1 = static_cast<double>(sus1);
    const double n2 = static_cast<double>(sus2);
    switch (kind) {
    case Kind::RR:
        if (sus1 < 3 || sus2 < 1)
            throw DomainError("RR bound needs sus1 >= 3, sus2 >= 1");
        return ((1.0 - p1) / (n1 - 2.0 + 2.0 * p1) + 1.0) * ((1.0 - p2) / n2 + 1.0) - 1.0;
    case Kind::OR: {
        if (sus1 < 3 || sus2 < 3)
            throw DomainError("OR bound needs sus_i >= 3");
        const double q1 = p1 * (1.0 - p1);
        const double q2 = p2 * (1.0 - p2);
        return ((1.0 - q1 / (n1 - 2.0 + 2.0 * p1)) / (n1 - 2.0) + 1.0) *
                   ((1.0 - q2 / (n2 - 2.0 * p2)) / (n2 - 2.0) + 1.0) -
               1.0;
    }
    case Kind::LRR:
    case Kind::LOR:
        return error_fn(n1, n2, kind);
    }
    return 0.0;
}

struct RatioMoments {
    double mean;
    double mean_inv;
    double var;
    double var_inv;
    double cov_neg_inv;  // Cov[W, -1/W]
};

// Small-probability approximations for the moments of W.
inline RatioMoments stage1_ratio_moments(std::uint64_t suf1, std::uint64_t suf2, double ratio)
{
    const double n1 = static_cast<double>(suf1);
    const double n2 = static_cast<double>(suf2);
    RatioMoments m;
    m.mean = n2 * ratio / (n1 - 1.0);
    m.mean_inv = n1 / ((n2 - 1.0) * ratio);
    m.var = n2 * (n1 + n2 - 1.0) * ratio * ratio / ((n1 - 2.0) * (n1 - 1.0) * (n1 - 1.0));
    m.var_inv = n1 * (n1 + n2 - 1.0) / ((n2 - 2.0) * (n2 - 1.0) * (n2 - 1.0) * ratio * ratio);
    m.cov_neg_inv = (n1 + n2 - 1.0) / ((n1 - 1.0) * (n2 - 1.0));
    return m;
}

// Exact bracket for E[W]; q1, q2 are the stage-1 success probabilities.
inline Interval stage1_mean_bounds(std::uint64_t suf1, std::uint64_t suf2, double q1, double q2,
                                   double b1 = 0.5, double b2 = 0.5)
{
    const double n1 = static_cast<double>(suf1);
    const double n2 = static_cast<double>(suf2);
    const double lead = n2 * (q1 / q2) / (n1 - 1.0) * (1.0 - b2 * q2 / n2);
    return {lead * (1.0 - q1 / (n1 - 2.0)), lead * (1.0 - (1.0 - b1) * q1 / (n1 - 1.0 + q1))};
}

struct VarianceSummands {
    double direct_stage1;      // Var of the stage-1 demand difference
    double conditional_stage2; // E of conditional stage-2 variance
    double induced_stage2;     // Var of conditional stage-2 mean
    double covariance_bound;   // Cauchy-Schwarz bound on the cross term
};

// Summands of Var[D]*s^2*m1*m2 for small s.
inline VarianceSummands variance_decomposition(Kind kind, double tarvar, double tarsara, double ratio)
{
    const auto k = constants(kind);
    const double n = static_cast<double>(select_suf1(tarvar, kind));
    const double susrou = 1.0;
    const double x = tarsara * ratio;
    const double iv = 1.0 / tarvar;
    const double lead = detail::size_lead(kind, tarvar, n, susrou);
    VarianceSummands v;
    if (k.factory) {
        v.direct_stage1 = 9.0 * n / 4.0 * (1.0 / x + x);
        v.conditional_stage2 = (iv + k.c1 + susrou) / x + x * (iv + k.c1 + susrou - k.alpha) + 2.0 * lead;
        v.induced_stage2 = lead * lead * (2.0 * n - 1.0) *
                           ((x + 1.0 / x) / (n * (n - 2.0)) + 2.0 / (n * n));
    } else {
        const double d = k.c1 - k.c2;
        v.direct_stage1 = n / x + (n + d) * x;
        v.conditional_stage2 = (iv + k.c1 + susrou) / x + x * (iv + k.c2 + susrou) + 2.0 * lead;
        v.induced_stage2 = lead * lead * (2.0 * n + d - 1.0) *
                           (x / ((n - 2.0) * (n + d)) + 1.0 / (x * n * (n + d - 2.0)) +
                            2.0 / (n * (n + d)));
    }
    v.covariance_bound = 2.0 * std::sqrt(v.direct_stage1 * v.induced_stage2);
    return v;
}

// Var of the raw input count of a factory-driven IBS with suf successes.
inline double factory_input_variance(std::uint64_t suf, double p)
{
    const double q = p * (1.0 - p);
    return (9.0 - 14.0 * q) * static_cast<double>(suf) / (4.0 * q * q);
}

} // namespace seqratio
