#include "seqratio/estimator.hpp"
#include "seqratio/theory.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>

using namespace seqratio;
using Catch::Approx;

namespace {

DesignParams small_design(Kind kind, std::uint64_t suf1, std::uint64_t suf2)
{
    auto d = derive_design(0.1, 1.0, kind);
    d.suf1 = suf1;
    d.suf2 = suf2;
    return d;
}

// P(output = 1) and E[inputs] by enumerating (criterion, first bit, second bit)
std::pair<double, double> factory_enumeration(double p)
{
    double succ = 0.0, inputs = 0.0;
    for (int crit = 0; crit < 2; ++crit) {
        for (int b1 = 0; b1 < 2; ++b1) {
            const double w1 = 0.5 * (b1 ? p : 1 - p);
            const bool stops = crit == 0 ? b1 == 0 : b1 == 1;
            if (stops) {
                inputs += w1;
                continue;
            }
            for (int b2 = 0; b2 < 2; ++b2) {
                const double w = w1 * (b2 ? p : 1 - p);
                inputs += 2 * w;
                const int out = crit == 0 ? 1 - b2 : b2;
                succ += out * w;
            }
        }
    }
    return {succ, inputs};
}

} // namespace

TEST_CASE("stage one")
{
    SECTION("deterministic counts")
    {
        ScriptedSource ones({1}, {1});
        AuxStreams aux(StreamKey{});
        const auto r = run_stage1(small_design(Kind::RR, 3, 5), ones, aux);
        REQUIRE(r.vasaf1 == 3);
        REQUIRE(r.vasaf2 == 5);
        REQUIRE(r.varaf == Approx(1.8));
        REQUIRE(ones.ledger().stage_count(Stage::One, PopulationId::Pop1) == 3);
    }

    SECTION("factory outputs and raw inputs are both tracked")
    {
        SyntheticSource src(0.3, 0.6, StreamKey{4, 0, 0});
        AuxStreams aux(StreamKey{4, 0, 0});
        const auto r = run_stage1(small_design(Kind::OR, 4, 4), src, aux);
        REQUIRE(r.raw1 == src.ledger().total(PopulationId::Pop1));
        REQUIRE(r.raw2 == src.ledger().total(PopulationId::Pop2));
        REQUIRE(r.vasaf1 >= 4);
        REQUIRE(r.raw1 >= r.vasaf1);
        REQUIRE(r.raw1 <= 2 * r.vasaf1);
        REQUIRE(r.varaf == Approx((r.vasaf2 - 0.5) / (r.vasaf1 - 0.5)));
    }

    SECTION("mean of the stage-1 ratio for small probabilities")
    {
        const int reps = 100'000;
        for (Kind kind : {Kind::RR, Kind::OR}) {
            const auto d = derive_design(0.01, 1.0, kind);
            const double p1 = 0.004, p2 = 0.001;
            double s = 0, s2 = 0;
            for (int i = 0; i < reps; ++i) {
                SyntheticSource src(p1, p2, StreamKey{77, static_cast<std::uint64_t>(kind), static_cast<std::uint64_t>(i)});
                AuxStreams aux(StreamKey{77, static_cast<std::uint64_t>(kind), static_cast<std::uint64_t>(i)});
                const double w = run_stage1(d, src, aux).varaf;
                s += w;
                s2 += w * w;
            }
            const double mean = s / reps;
            const double se = std::sqrt((s2 / reps - mean * mean) / reps);
            const double ratio = ratio_scale(kind, p1, p2).ratio;
            const double approx = static_cast<double>(d.suf2) * ratio / (static_cast<double>(d.suf1) - 1.0);
            INFO(kind_name(kind));
            REQUIRE(std::abs(mean - approx) < 3 * se);
        }
    }
}

TEST_CASE("Bernoulli factory")
{
    Stream coin(StreamKey{8, 0, 0}, StreamTag::Factory);
    for (int bit : {0, 1}) {
        ScriptedSource fixed({bit}, {bit});
        const int calls = 100000;
        int ones = 0;
        for (int i = 0; i < calls; ++i)
            ones += bernoulli_factory_pq(fixed, PopulationId::Pop1, coin);
        REQUIRE(ones == 0);
        const double mean_inputs = static_cast<double>(fixed.ledger().total(PopulationId::Pop1)) / calls;
        REQUIRE(std::abs(mean_inputs - 1.5) < 3 * 0.5 / std::sqrt(calls));
    }

    const auto [succ, inputs] = factory_enumeration(0.3);
    REQUIRE(succ == Approx(0.21).epsilon(1e-14));
    REQUIRE(inputs == Approx(1.5).epsilon(1e-14));

    SyntheticSource src(0.3, 0.3, StreamKey{8, 1, 0});
    const int calls = 1'000'000;
    int ones = 0;
    for (int i = 0; i < calls; ++i)
        ones += bernoulli_factory_pq(src, PopulationId::Pop2, coin);
    const double rate = static_cast<double>(ones) / calls;
    REQUIRE(std::abs(rate - succ) < 3 * std::sqrt(succ * (1 - succ) / calls));
    // inputs per call are 1 or 2, with P(2) = 1/2
    const double mean_inputs = static_cast<double>(src.ledger().total(PopulationId::Pop2)) / calls;
    REQUIRE(std::abs(mean_inputs - inputs) < 3 * 0.5 / std::sqrt(calls));
}

TEST_CASE("stage two and point estimates")
{
    SECTION("RR at the deterministic limit")
    {
        ScriptedSource ones({1}, {1});
        const SecondStageParams sus{3, 2};
        const auto c = run_stage2(Kind::RR, sus, ones);
        REQUIRE(c.m1 == 3);
        REQUIRE(c.m2 == 2);
        REQUIRE(point_estimate(Kind::RR, sus, c) == 1.0);
        REQUIRE(ones.ledger().stage_count(Stage::Two, PopulationId::Pop1) == 3);
    }

    SECTION("LRR telescopes to zero when counts equal parameters")
    {
        StageTwoCounts c;
        c.m1 = 7;
        c.m2 = 12;
        REQUIRE(point_estimate(Kind::LRR, {7, 12}, c) == Approx(0.0).margin(1e-15));
        c.m1 = 20;
        REQUIRE(point_estimate(Kind::LRR, {7, 12}, c) == Approx(harmonic(6) - harmonic(19)));
    }

    SECTION("OR ordering: successes then failures, with the offset")
    {
        // pop 1: 4 successes take 5 draws, then 2 failures take 4 more
        // pop 2: 2 successes take 3 draws, then 4 failures take 5 more
        ScriptedSource s({1, 0, 1, 1, 1, 1, 0, 1, 0, 0}, {0, 1, 1, 0, 1, 0, 0, 0});
        const SecondStageParams sus{4, 4};
        const auto c = run_stage2(Kind::OR, sus, s);
        REQUIRE(c.succ1 == 5);
        REQUIRE(c.fail1 == 4);
        REQUIRE(c.succ2 == 3);
        REQUIRE(c.fail2 == 5);
        REQUIRE(c.m1 == 9);
        REQUIRE(c.m2 == 8);
        REQUIRE(point_estimate(Kind::OR, sus, c) == Approx(3.0 * 3.0 * 4.0 * 3.0 / (2.0 * 2.0 * 4.0 * 4.0)));

        // no offset: pop 1 needs 4 failures (7 draws, wrapping), pop 2 needs 4 successes (10 draws)
        ScriptedSource t({1, 0, 1, 1, 1, 1, 0, 1, 0, 0}, {0, 1, 1, 0, 1, 0, 0, 0});
        const auto l = run_stage2(Kind::LOR, sus, t);
        REQUIRE(l.succ1 == 5);
        REQUIRE(l.fail1 == 7);
        REQUIRE(l.succ2 == 10);
        REQUIRE(l.fail2 == 6);
        REQUIRE(point_estimate(Kind::LOR, sus, l) ==
                Approx(-harmonic(4) + harmonic(6) + harmonic(9) - harmonic(5)));
    }

    SECTION("conditional mean of the stage-2 count")
    {
        const int reps = 200'000;
        double s = 0, s2 = 0;
        for (int i = 0; i < reps; ++i) {
            SyntheticSource src(0.05, 0.2, StreamKey{31, 0, static_cast<std::uint64_t>(i)});
            const double m = static_cast<double>(run_stage2(Kind::RR, {6, 3}, src).m1);
            s += m;
            s2 += m * m;
        }
        const double mean = s / reps;
        const double se = std::sqrt((s2 / reps - mean * mean) / reps);
        REQUIRE(std::abs(mean - 6 / 0.05) < 3 * se);
    }
}

TEST_CASE("full pipeline")
{
    SECTION("unbiased RR estimate")
    {
        const auto d = derive_design(0.05, 1.0, Kind::RR);
        const int reps = 1'000'000;
        double s = 0, s2 = 0;
        for (int i = 0; i < reps; ++i) {
            const StreamKey key{2024, 0, static_cast<std::uint64_t>(i)};
            SyntheticSource src(0.04, 0.0025, key);
            AuxStreams aux(key);
            const double x = estimate(d, src, aux).point_estimate;
            s += x;
            s2 += x * x;
        }
        const double mean = s / reps;
        const double se = std::sqrt((s2 / reps - mean * mean) / reps);
        REQUIRE(std::abs(mean - 16.0) < 4 * se);
    }

    SECTION("results are consistent")
    {
        for (Kind kind : {Kind::RR, Kind::LRR, Kind::OR, Kind::LOR}) {
            const auto d = derive_design(0.1, 2.0, kind);
            for (int i = 0; i < 500; ++i) {
                const StreamKey key{5, static_cast<std::uint64_t>(kind), static_cast<std::uint64_t>(i)};
                SyntheticSource src(0.2, 0.05, key);
                AuxStreams aux(key);
                const auto r = estimate(d, src, aux);
                REQUIRE(std::isfinite(r.point_estimate));
                if (constants(kind).relative)
                    REQUIRE(r.point_estimate > 0.0);
                REQUIRE(error_fn(static_cast<double>(r.sus.sus1), static_cast<double>(r.sus.sus2), kind) <= d.tarvar);
                REQUIRE(r.ledger.total(PopulationId::Pop1) == r.stage1.raw1 + r.counts.m1);
                REQUIRE(r.ledger.total(PopulationId::Pop2) == r.stage1.raw2 + r.counts.m2);
                REQUIRE(r.ledger.stage_count(Stage::Two, PopulationId::Pop1) == r.counts.m1);
            }
        }
    }

    SECTION("estimate depends on stage 1 only through the rounded parameters")
    {
        const auto d = derive_design(0.05, 1.0, Kind::RR);
        int compared = 0;
        for (std::uint64_t i = 0; i < 400 && compared < 20; ++i) {
            SyntheticSource a(0.1, 0.1, StreamKey{1, 0, i});
            SyntheticSource b(0.1, 0.1, StreamKey{2, 0, i});
            AuxStreams aa(StreamKey{1, 0, i}), ab(StreamKey{2, 0, i});
            const auto ra = round_sus(solve_sus(d, run_stage1(d, a, aa).varaf), d, aa.rounding);
            const auto rb = round_sus(solve_sus(d, run_stage1(d, b, ab).varaf), d, ab.rounding);
            if (ra.sus1 != rb.sus1 || ra.sus2 != rb.sus2)
                continue;
            ++compared;
            SyntheticSource sa(0.1, 0.1, StreamKey{3, 0, i});
            SyntheticSource sb(0.1, 0.1, StreamKey{3, 0, i});
            const auto ca = run_stage2(Kind::RR, ra, sa);
            const auto cb = run_stage2(Kind::RR, rb, sb);
            REQUIRE(point_estimate(Kind::RR, ra, ca) == point_estimate(Kind::RR, rb, cb));
        }
        REQUIRE(compared > 0);
    }

    SECTION("factory input counts in stage one")
    {
        const auto d = derive_design(0.05, 1.0, Kind::OR);
        const double p = 0.1;
        const double q = p * (1 - p);
        const int reps = 200'000;
        double s = 0, s2 = 0;
        for (int i = 0; i < reps; ++i) {
            const StreamKey key{55, 0, static_cast<std::uint64_t>(i)};
            SyntheticSource src(p, p, key);
            AuxStreams aux(key);
            const double n = static_cast<double>(run_stage1(d, src, aux).raw1);
            s += n;
            s2 += n * n;
        }
        const double mean = s / reps;
        const double var = s2 / reps - mean * mean;
        const double se = std::sqrt(var / reps);
        REQUIRE(std::abs(mean - 1.5 * static_cast<double>(d.suf1) / q) < 3 * se);
    }
}
