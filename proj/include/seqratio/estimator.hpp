#pragma once

#include "seqratio/design.hpp"
#include "seqratio/random.hpp"
#include "seqratio/sampling.hpp"
#include "seqratio/special.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>

namespace seqratio {

struct StageOneResult {
    // RR/LRR: raw draws. OR/LOR: factory outputs.
    std::uint64_t vasaf1 = 0;
    std::uint64_t vasaf2 = 0;
    // raw inputs consumed (equal to vasaf for RR/LRR)
    std::uint64_t raw1 = 0;
    std::uint64_t raw2 = 0;
    double varaf = 0.0;
};

// OR/LOR splits: successes and failures per population. RR/LRR use m1, m2 only.
struct StageTwoCounts {
    std::uint64_t m1 = 0;
    std::uint64_t m2 = 0;
    std::uint64_t succ1 = 0;  // m'_1
    std::uint64_t fail1 = 0;  // m''_1
    std::uint64_t succ2 = 0;  // m'_2
    std::uint64_t fail2 = 0;  // m''_2
};

struct EstimateResult {
    Kind kind = Kind::RR;
    double point_estimate = 0.0;
    StageOneResult stage1;
    SecondStageReal sus_real{};
    SecondStageParams sus{};
    StageTwoCounts counts;
    SampleLedger ledger;
    std::optional<std::uint64_t> groups_used;
    std::uint64_t discarded1 = 0;
    std::uint64_t discarded2 = 0;
    bool buffer_warning = false;
};

// Auxiliary randomness, kept apart from the observation streams.
struct AuxStreams {
    Stream rounding;
    Stream factory;

    explicit AuxStreams(const StreamKey& key)
        : rounding(key, StreamTag::Rounding), factory(key, StreamTag::Factory) {}
};

// One Bernoulli(p(1-p)) output from Bernoulli(p) inputs; 3/2 inputs on average.
template <SampleSource S>
int bernoulli_factory_pq(S& source, PopulationId pop, Stream& rng)
{
    const bool first_criterion = rng.coin();
    const int x = source.draw(pop);
    if (first_criterion) {
        if (x == 0)
            return 0;
        return 1 - source.draw(pop);
    }
    if (x == 1)
        return 0;
    return source.draw(pop);
}

namespace detail {

template <SampleSource S>
std::uint64_t factory_ibs(S& source, PopulationId pop, std::uint64_t r, Stream& rng)
{
    const std::uint64_t cap = source.draw_cap();
    const std::uint64_t start = source.ledger().total(pop);
    std::uint64_t outputs = 0;
    std::uint64_t hits = 0;
    while (hits < r) {
        if (source.ledger().total(pop) - start >= cap)
            draw_cap_abort(source, pop);
        hits += static_cast<std::uint64_t>(bernoulli_factory_pq(source, pop, rng));
        ++outputs;
    }
    return outputs;
}

} // namespace detail

template <SampleSource S>
StageOneResult run_stage1(const DesignParams& d, S& source, AuxStreams& aux)
{
    StageOneResult out;
    auto& led = source.ledger();
    led.stage = Stage::One;
    const std::uint64_t before1 = led.total(PopulationId::Pop1);
    const std::uint64_t before2 = led.total(PopulationId::Pop2);
    if (constants(d.kind).factory) {
        out.vasaf1 = detail::factory_ibs(source, PopulationId::Pop1, d.suf1, aux.factory);
        out.vasaf2 = detail::factory_ibs(source, PopulationId::Pop2, d.suf2, aux.factory);
        out.raw1 = led.total(PopulationId::Pop1) - before1;
        out.raw2 = led.total(PopulationId::Pop2) - before2;
    } else {
        out.vasaf1 = ibs_count(source, PopulationId::Pop1, d.suf1);
        out.vasaf2 = ibs_count(source, PopulationId::Pop2, d.suf2);
        out.raw1 = out.vasaf1;
        out.raw2 = out.vasaf2;
    }
    out.varaf = (static_cast<double>(out.vasaf2) - d.cdesm2) /
                (static_cast<double>(out.vasaf1) - d.cdesm1);
    return out;
}

template <SampleSource S>
StageTwoCounts run_stage2(Kind kind, const SecondStageParams& sus, S& source)
{
    const auto k = constants(kind);
    source.ledger().stage = Stage::Two;
    StageTwoCounts c;
    if (!k.factory) {
        c.m1 = ibs_count(source, PopulationId::Pop1, sus.sus1);
        c.m2 = ibs_count(source, PopulationId::Pop2, sus.sus2);
        return c;
    }
    const auto alpha = static_cast<std::uint64_t>(k.alpha);
    if (sus.sus1 <= alpha || sus.sus2 <= alpha)
        throw std::logic_error("second-stage parameters too small for this kind");
    c.succ1 = ibs_count(source, PopulationId::Pop1, sus.sus1);
    c.fail1 = ibs_failures_count(source, PopulationId::Pop1, sus.sus1 - alpha);
    c.succ2 = ibs_count(source, PopulationId::Pop2, sus.sus2 - alpha);
    c.fail2 = ibs_failures_count(source, PopulationId::Pop2, sus.sus2);
    c.m1 = c.succ1 + c.fail1;
    c.m2 = c.succ2 + c.fail2;
    return c;
}

inline double point_estimate(Kind kind, const SecondStageParams& sus, const StageTwoCounts& c)
{
    const double n1 = static_cast<double>(sus.sus1);
    const double n2 = static_cast<double>(sus.sus2);
    switch (kind) {
    case Kind::RR: {
        if (sus.sus2 < 1 || c.m1 < 2)
            throw std::logic_error("RR estimate with degenerate counts");
        return (n1 - 1.0) * static_cast<double>(c.m2) /
               (n2 * (static_cast<double>(c.m1) - 1.0));
    }
    case Kind::LRR:
        if (c.m1 < 1 || c.m2 < 1 || sus.sus1 < 1 || sus.sus2 < 1)
            throw std::logic_error("LRR estimate with degenerate counts");
        return -harmonic_or_zero(c.m1 - 1) + harmonic_or_zero(c.m2 - 1) +
               harmonic_or_zero(sus.sus1 - 1) - harmonic_or_zero(sus.sus2 - 1);
    case Kind::OR: {
        if (sus.sus1 < 3 || sus.sus2 < 3 || c.succ1 < 2 || c.fail2 < 2)
            throw std::logic_error("OR estimate with degenerate counts");
        return (n1 - 1.0) * (n2 - 1.0) * static_cast<double>(c.fail1) *
               static_cast<double>(c.succ2) /
               ((n1 - 2.0) * (n2 - 2.0) * (static_cast<double>(c.succ1) - 1.0) *
                (static_cast<double>(c.fail2) - 1.0));
    }
    case Kind::LOR:
        if (c.succ1 < 1 || c.fail1 < 1 || c.succ2 < 1 || c.fail2 < 1)
            throw std::logic_error("LOR estimate with degenerate counts");
        return -harmonic_or_zero(c.succ1 - 1) + harmonic_or_zero(c.fail1 - 1) +
               harmonic_or_zero(c.succ2 - 1) - harmonic_or_zero(c.fail2 - 1);
    }
    return 0.0;
}

template <SampleSource S>
EstimateResult estimate(const DesignParams& d, S& source, AuxStreams& aux)
{
    EstimateResult res;
    res.kind = d.kind;
    res.stage1 = run_stage1(d, source, aux);
    res.sus_real = solve_sus(d, res.stage1.varaf);
    res.sus = round_sus(res.sus_real, d, aux.rounding);
    res.counts = run_stage2(d.kind, res.sus, source);
    res.point_estimate = point_estimate(d.kind, res.sus, res.counts);
    res.ledger = source.ledger();
    return res;
}

} // namespace seqratio
