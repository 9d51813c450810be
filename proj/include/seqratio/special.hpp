#pragma once

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace seqratio {

class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

inline constexpr std::uint64_t kHarmonicCutoff = std::uint64_t{1} << 20;
inline constexpr double kEulerGamma = 0.57721566490153286060651209;

namespace detail {

inline const std::vector<double>& harmonic_table()
{
    static const std::vector<double> table = [] {
        std::vector<double> t(kHarmonicCutoff + 1);
        long double acc = 0.0L;
        t[0] = 0.0;
        for (std::uint64_t i = 1; i <= kHarmonicCutoff; ++i) {
            acc += 1.0L / static_cast<long double>(i);
            t[i] = static_cast<double>(acc);
        }
        return t;
    }();
    return table;
}

// psi(n+1) + gamma, asymptotic series; error far below 1e-16 for n >= 2^20
inline double harmonic_asymptotic(std::uint64_t n)
{
    const long double x = static_cast<long double>(n);
    const long double inv = 1.0L / x;
    const long double inv2 = inv * inv;
    const long double series =
        inv / 2.0L - inv2 * (1.0L / 12.0L - inv2 * (1.0L / 120.0L - inv2 / 252.0L));
    return static_cast<double>(std::log(x) + static_cast<long double>(kEulerGamma) + series);
}

} // namespace detail

inline double harmonic(std::uint64_t n)
{
    if (n == 0)
        throw DomainError("harmonic number needs n >= 1");
    if (n <= kHarmonicCutoff)
        return detail::harmonic_table()[n];
    return detail::harmonic_asymptotic(n);
}

// H_0 = 0
inline double harmonic_or_zero(std::uint64_t n) { return n == 0 ? 0.0 : harmonic(n); }

inline double beta_fn(double a, double b)
{
    if (!(a > 0.0) || !(b > 0.0))
        throw DomainError("beta function needs positive parameters");
    return boost::math::beta(a, b);
}

inline double log_beta(double a, double b)
{
    if (!(a > 0.0) || !(b > 0.0))
        throw DomainError("beta function needs positive parameters");
    return boost::math::lgamma(a) + boost::math::lgamma(b) - boost::math::lgamma(a + b);
}

inline double reg_inc_beta(double x, double a, double b)
{
    if (!(a > 0.0) || !(b > 0.0))
        throw DomainError("incomplete beta needs positive parameters");
    if (!(x >= 0.0 && x <= 1.0))
        throw DomainError("incomplete beta needs x in [0,1]");
    return boost::math::ibeta(a, b, x);
}

inline double beta_prime_pdf(double z, double a, double b)
{
    if (!(a > 0.0) || !(b > 0.0))
        throw DomainError("beta prime needs positive parameters");
    if (!(z > 0.0))
        throw DomainError("beta prime density needs z > 0");
    return std::exp((a - 1.0) * std::log(z) - (a + b) * std::log1p(z) - log_beta(a, b));
}

inline double beta_prime_cdf(double z, double a, double b)
{
    if (!(a > 0.0) || !(b > 0.0))
        throw DomainError("beta prime needs positive parameters");
    if (!(z >= 0.0))
        throw DomainError("beta prime cdf needs z >= 0");
    if (std::isinf(z))
        return 1.0;
    return reg_inc_beta(z / (z + 1.0), a, b);
}

// Moments of N, the number of draws needed for r successes.
struct NegBinMoments {
    std::uint64_t r;
    double p;

    double mean() const { return static_cast<double>(r) / p; }
    double variance() const { return static_cast<double>(r) * (1.0 - p) / (p * p); }

    // E[1/(N-1)]
    double mean_inv_minus1() const
    {
        if (r < 2)
            throw DomainError("E[1/(N-1)] needs r >= 2");
        return p / (static_cast<double>(r) - 1.0);
    }

    // upper bound on Var[1/(N-1)]
    double var_inv_minus1_upper() const
    {
        if (r < 3)
            throw DomainError("Var[1/(N-1)] bound needs r >= 3");
        const double rm1 = static_cast<double>(r) - 1.0;
        return p * p * (1.0 - p) / (rm1 * rm1 * (static_cast<double>(r) - 2.0 + 2.0 * p));
    }
};

inline NegBinMoments negbin_moments(std::uint64_t r, double p)
{
    if (r < 1)
        throw DomainError("negative binomial needs r >= 1");
    if (!(p > 0.0 && p <= 1.0))
        throw DomainError("negative binomial needs p in (0,1]");
    return NegBinMoments{r, p};
}

struct Interval {
    double lower;
    double upper;
};

// Bracket for E[1/N].
inline Interval mean_inv_bounds(std::uint64_t r, double p)
{
    if (r < 3)
        throw DomainError("E[1/N] bounds need r >= 3");
    const double rd = static_cast<double>(r);
    const double lead = p / (rd - 1.0);
    return {lead * (1.0 - p / (rd - 2.0)), lead * (1.0 - p / (rd - 1.0 + p))};
}

} // namespace seqratio
