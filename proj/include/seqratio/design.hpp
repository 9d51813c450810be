#pragma once

#include "seqratio/random.hpp"
#include "seqratio/sampling.hpp"
#include "seqratio/special.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace seqratio {

enum class Kind { RR, LRR, OR, LOR };

struct KindConstants {
    double c1;
    double c2;
    double c12;
    int alpha;           // stage-2 failure offset, OR/LOR only
    double stage1_cost;  // raw inputs per stage-1 observation
    bool relative;       // error measured relative to the parameter
    bool factory;        // stage 1 runs on p(1-p) outputs
};

inline constexpr KindConstants constants(Kind kind) noexcept
{
    switch (kind) {
    case Kind::RR:
        return {2.0, 0.0, 1.0, 0, 1.0, true, false};
    case Kind::LRR:
        return {1.0, 1.0, 0.0, 0, 1.0, false, false};
    case Kind::OR:
        return {2.0, 2.0, 1.0, 2, 1.5, true, true};
    case Kind::LOR:
        return {1.25, 1.25, 0.0, 0, 1.5, false, true};
    }
    return {};
}

inline std::string_view kind_name(Kind kind) noexcept
{
    switch (kind) {
    case Kind::RR:
        return "rr";
    case Kind::LRR:
        return "lrr";
    case Kind::OR:
        return "or";
    case Kind::LOR:
        return "lor";
    }
    return "?";
}

inline Kind parse_kind(std::string_view s)
{
    if (s == "rr" || s == "RR")
        return Kind::RR;
    if (s == "lrr" || s == "LRR")
        return Kind::LRR;
    if (s == "or" || s == "OR")
        return Kind::OR;
    if (s == "lor" || s == "LOR")
        return Kind::LOR;
    throw ConfigError("unknown estimator kind '" + std::string(s) + "'");
}

// Parameter being estimated, for given probabilities.
inline double true_value(Kind kind, double p1, double p2)
{
    switch (kind) {
    case Kind::RR:
        return p1 / p2;
    case Kind::LRR:
        return std::log(p1) - std::log(p2);
    case Kind::OR:
        return p1 * (1.0 - p2) / (p2 * (1.0 - p1));
    case Kind::LOR:
        return std::log(p1) - std::log1p(-p1) - std::log(p2) + std::log1p(-p2);
    }
    return 0.0;
}

struct DesignParams {
    Kind kind = Kind::RR;
    double tarvar = 0.0;
    double tarsara = 1.0;
    std::uint64_t suf1 = 0;
    std::uint64_t suf2 = 0;
    double cdemul = 0.0;   // delta
    double cdeadd1 = 0.0;  // a1
    double cdeadd2 = 0.0;  // a2
    double cdesm1 = 0.5;
    double cdesm2 = 0.5;
    double susrou = 1.0;
    bool outside_studied_range = false;
};

struct SecondStageReal {
    double sus1_real;
    double sus2_real;
    double discriminant;
};

struct SecondStageParams {
    std::uint64_t sus1;
    std::uint64_t sus2;
};

struct FirstOrderCoeffs {
    double csusco1;
    double csusva1;
    double csusco2;
    double csusva2;
};

inline double error_fn(double sus1, double sus2, Kind kind)
{
    const auto k = constants(kind);
    if (!(sus1 > k.c1) || !(sus2 > k.c2))
        throw DomainError("error function needs sus_i > c_i");
    const double x = sus1 - k.c1;
    const double y = sus2 - k.c2;
    return 1.0 / x + 1.0 / y + k.c12 / (x * y);
}

namespace detail {

// a1 + c1 as a function of the stage-1 parameter, written to avoid the
// 1/tarvar cancellation.
inline double shifted_a1(double tarvar, double n, double susrou, Kind kind)
{
    const auto k = constants(kind);
    if (k.factory) {
        return (1.5 * n + k.c1 + susrou) * (n - 1.0) / n - 1.0 / (n * tarvar);
    }
    const double d = k.c1 - k.c2;
    const double q2m1 = (1.0 - 2.0 * n - d) / (n * (n + d));
    const double q = std::sqrt(1.0 + q2m1);
    return q2m1 / ((q + 1.0) * tarvar) + (n + k.c1 + susrou) * q;
}

} // namespace detail

inline double curvature_fn(double tarvar, double suf1, double susrou, Kind kind)
{
    if (!(suf1 >= 3.0))
        throw DomainError("curvature function needs suf1 >= 3");
    const double f = detail::shifted_a1(tarvar, suf1, susrou, kind);
    return tarvar * f * f + 2.0 * f - constants(kind).c12;
}

inline constexpr std::uint64_t kSuf1SearchCap = 1'000'000;

inline std::uint64_t select_suf1(double tarvar, Kind kind)
{
    if (!(tarvar > 0.0))
        throw ConfigError("tarvar must be positive");
    for (std::uint64_t n = 3; n <= kSuf1SearchCap; ++n) {
        if (curvature_fn(tarvar, static_cast<double>(n), 1.0, kind) >= 0.0)
            return n;
    }
    throw ConfigError("no stage-1 parameter found below the search cap");
}

// Design constants for an explicitly chosen stage-1 parameter.
inline DesignParams make_design(double tarvar, double tarsara, Kind kind, std::uint64_t suf1)
{
    if (!(tarvar > 0.0))
        throw ConfigError("tarvar must be positive");
    if (!(tarsara > 0.0))
        throw ConfigError("tarsara must be positive");
    if (suf1 < 3)
        throw ConfigError("stage-1 parameter must be at least 3");
    const auto k = constants(kind);
    DesignParams d;
    d.kind = kind;
    d.tarvar = tarvar;
    d.tarsara = tarsara;
    d.outside_studied_range = tarvar > 1.0;
    d.suf1 = suf1;
    const double n = static_cast<double>(suf1);
    d.cdeadd1 = detail::shifted_a1(tarvar, n, d.susrou, kind) - k.c1;
    if (k.factory) {
        d.suf2 = suf1;
        d.cdemul = tarsara;
        d.cdeadd2 = d.cdeadd1;
    } else {
        const double diff = k.c1 - k.c2;
        d.suf2 = static_cast<std::uint64_t>(n + diff);
        d.cdemul = tarsara * std::sqrt(n * (n - 1.0) / ((n + diff) * (n + diff - 1.0)));
        d.cdeadd2 = d.cdeadd1 + diff;
    }
    return d;
}

inline DesignParams derive_design(double tarvar, double tarsara, Kind kind)
{
    if (!(tarvar > 0.0))
        throw ConfigError("tarvar must be positive");
    return make_design(tarvar, tarsara, kind, select_suf1(tarvar, kind));
}

inline FirstOrderCoeffs first_order_coeffs(const DesignParams& d)
{
    const auto k = constants(d.kind);
    const double iv = 1.0 / d.tarvar;
    return {iv + k.c1, d.cdemul * (iv + d.cdeadd2 + k.c2), iv + k.c2,
            (iv + d.cdeadd1 + k.c1) / d.cdemul};
}

// Real solution of g(n1,n2) = tarvar together with (n1+a1) = delta*W*(n2+a2).
inline SecondStageReal solve_sus(const DesignParams& d, double varaf)
{
    if (!(varaf > 0.0) || !std::isfinite(varaf))
        throw DomainError("stage-1 ratio must be positive and finite");
    const auto k = constants(d.kind);
    const double e = d.tarvar;
    const double a1 = d.cdeadd1;
    const double a2 = d.cdeadd2;
    const double dw = d.cdemul * varaf;
    const double lin = dw * (e * (a2 + k.c2) + 1.0) - e * (a1 - k.c1) + 1.0;

    double disc;
    const double f1 = a1 + k.c1;
    const double f2 = a2 + k.c2;
    if (f1 == f2) {
        // (ef+1)^2 (dW+1)^2 - 4 e dW h, with h the curvature value
        const double h = e * f1 * f1 + 2.0 * f1 - k.c12;
        const double sq = (e * f1 + 1.0) * (dw + 1.0);
        disc = sq * sq - 4.0 * e * dw * h;
    } else {
        disc = lin * lin -
               4.0 * e * (dw * ((e * k.c1 + 1.0) * f2 + k.c1 - k.c12) - (e * k.c1 + 1.0) * a1);
    }
    if (disc < 0.0) {
        if (disc < -1e-9 * lin * lin)
            throw std::logic_error("negative discriminant in second-stage solver");
        disc = 0.0;
    }
    const double n1 = (lin + std::sqrt(disc)) / (2.0 * e);
    const double n2 = (n1 + a1) / dw - a2;
    return {n1, n2, disc};
}

namespace detail {

inline double snap_integral(double v)
{
    const double r = std::round(v);
    return std::abs(v - r) <= 1e-12 * std::max(1.0, std::abs(v)) ? r : v;
}

inline bool admissible(double x1, double x2, const DesignParams& d)
{
    const auto k = constants(d.kind);
    return x1 > k.c1 && x2 > k.c2 && error_fn(x1, x2, d.kind) <= d.tarvar;
}

} // namespace detail

inline SecondStageParams round_sus(const SecondStageReal& real, const DesignParams& d, Stream& rng)
{
    const double v1 = detail::snap_integral(real.sus1_real);
    const double v2 = detail::snap_integral(real.sus2_real);
    const double lo1 = std::floor(v1), hi1 = std::ceil(v1);
    const double lo2 = std::floor(v2), hi2 = std::ceil(v2);

    const bool first_up = rng.coin();
    const double cand[2][2] = {
        {first_up ? hi1 : lo1, first_up ? lo2 : hi2},
        {first_up ? lo1 : hi1, first_up ? hi2 : lo2},
    };
    for (const auto& c : cand) {
        if (detail::admissible(c[0], c[1], d))
            return {static_cast<std::uint64_t>(c[0]), static_cast<std::uint64_t>(c[1])};
    }
    double x1 = hi1, x2 = hi2;
    // only reachable through floating-point noise in the real solution
    while (!detail::admissible(x1, x2, d)) {
        x1 += 1.0;
        x2 += 1.0;
    }
    return {static_cast<std::uint64_t>(x1), static_cast<std::uint64_t>(x2)};
}

} // namespace seqratio
