#pragma once

#include "seqratio/random.hpp"

#include <array>
#include <concepts>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace seqratio {

enum class PopulationId : int { Pop1 = 0, Pop2 = 1 };

inline constexpr int index_of(PopulationId pop) noexcept { return static_cast<int>(pop); }

enum class Stage : int { One = 0, Two = 1 };

inline constexpr std::uint64_t kDefaultDrawCap = 1'000'000'000ULL;
inline constexpr std::uint64_t kCapHit = ~std::uint64_t{0};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SampleLedger;

class DrawCapExceeded : public std::runtime_error {
public:
    DrawCapExceeded(const std::string& what, std::uint64_t n1, std::uint64_t n2)
        : std::runtime_error(what), draws_pop1(n1), draws_pop2(n2) {}
    std::uint64_t draws_pop1;
    std::uint64_t draws_pop2;
};

struct SampleLedger {
    // counts[stage][pop]
    std::array<std::array<std::uint64_t, 2>, 2> counts{};
    Stage stage = Stage::One;

    void record(PopulationId pop) noexcept { ++counts[static_cast<int>(stage)][index_of(pop)]; }

    std::uint64_t total(PopulationId pop) const noexcept
    {
        return counts[0][index_of(pop)] + counts[1][index_of(pop)];
    }
    std::uint64_t stage_count(Stage st, PopulationId pop) const noexcept
    {
        return counts[static_cast<int>(st)][index_of(pop)];
    }
};

template <class S>
concept SampleSource = requires(S s, const S cs, PopulationId pop) {
    { s.draw(pop) } -> std::convertible_to<int>;
    { s.ledger() } -> std::same_as<SampleLedger&>;
    { cs.draw_cap() } -> std::convertible_to<std::uint64_t>;
};

// Independent Bernoulli(p1), Bernoulli(p2) streams, one per population.
class SyntheticSource {
public:
    SyntheticSource(double p1, double p2, const StreamKey& key)
        : p_{p1, p2},
          threshold_{bernoulli_threshold(p1), bernoulli_threshold(p2)},
          streams_{Stream(key, StreamTag::Pop1), Stream(key, StreamTag::Pop2)}
    {
        if (!(p1 > 0.0 && p1 < 1.0) || !(p2 > 0.0 && p2 < 1.0))
            throw ConfigError("synthetic probabilities must lie in (0,1)");
    }

    int draw(PopulationId pop) noexcept
    {
        const int i = index_of(pop);
        ledger_.record(pop);
        return streams_[i].next() < threshold_[i] ? 1 : 0;
    }

    // Same bits and ledger effect as repeated draw() calls until `target`
    // outcomes equal to `wanted` are seen. Returns the number of draws, or
    // kCapHit when the cap stops the loop first.
    std::uint64_t draw_until(PopulationId pop, std::uint64_t target, int wanted, std::uint64_t cap) noexcept
    {
        const int i = index_of(pop);
        Stream rng = streams_[i];
        const std::uint64_t t = threshold_[i];
        const bool want_success = wanted != 0;
        std::uint64_t n = 0;
        std::uint64_t hits = 0;
        while (hits < target && n < cap) {
            hits += ((rng.next() < t) == want_success);
            ++n;
        }
        streams_[i] = rng;
        ledger_.counts[static_cast<int>(ledger_.stage)][i] += n;
        return hits < target ? kCapHit : n;
    }

    SampleLedger& ledger() noexcept { return ledger_; }
    const SampleLedger& ledger() const noexcept { return ledger_; }
    std::uint64_t draw_cap() const noexcept { return cap_; }
    void set_draw_cap(std::uint64_t cap) noexcept { cap_ = cap; }

    double p1() const noexcept { return p_[0]; }
    double p2() const noexcept { return p_[1]; }

private:
    std::array<double, 2> p_;
    std::array<std::uint64_t, 2> threshold_;
    std::array<Stream, 2> streams_;
    SampleLedger ledger_;
    std::uint64_t cap_ = kDefaultDrawCap;
};

// Replays fixed bit sequences, cycling; handy for deterministic edge cases.
class ScriptedSource {
public:
    ScriptedSource(std::vector<int> bits1, std::vector<int> bits2)
        : bits_{std::move(bits1), std::move(bits2)}
    {
        if (bits_[0].empty() || bits_[1].empty())
            throw ConfigError("scripted source needs at least one bit per population");
    }

    int draw(PopulationId pop)
    {
        const int i = index_of(pop);
        ledger_.record(pop);
        const int bit = bits_[i][pos_[i] % bits_[i].size()];
        ++pos_[i];
        return bit;
    }

    SampleLedger& ledger() noexcept { return ledger_; }
    std::uint64_t draw_cap() const noexcept { return cap_; }
    void set_draw_cap(std::uint64_t cap) noexcept { cap_ = cap; }

private:
    std::array<std::vector<int>, 2> bits_;
    std::array<std::size_t, 2> pos_{};
    SampleLedger ledger_;
    std::uint64_t cap_ = kDefaultDrawCap;
};

// Line protocol: writes "? 1" or "? 2", reads back a line holding 1 or 0.
class ExternalSource {
public:
    ExternalSource(std::istream& in, std::ostream& out) : in_(in), out_(out) {}

    int draw(PopulationId pop)
    {
        out_ << "? " << (index_of(pop) + 1) << '\n';
        out_.flush();
        std::string line;
        if (!std::getline(in_, line))
            throw ProtocolError("input closed while waiting for a sample");
        const auto first = line.find_first_not_of(" \t\r");
        const auto last = line.find_last_not_of(" \t\r");
        const std::string token =
            first == std::string::npos ? std::string{} : line.substr(first, last - first + 1);
        if (token != "0" && token != "1")
            throw ProtocolError("unexpected token '" + token + "'");
        ledger_.record(pop);
        return token == "1" ? 1 : 0;
    }

    SampleLedger& ledger() noexcept { return ledger_; }
    std::uint64_t draw_cap() const noexcept { return cap_; }
    void set_draw_cap(std::uint64_t cap) noexcept { cap_ = cap; }

private:
    std::istream& in_;
    std::ostream& out_;
    SampleLedger ledger_;
    std::uint64_t cap_ = kDefaultDrawCap;
};

namespace detail {

template <SampleSource S>
[[noreturn]] void draw_cap_abort(S& source, PopulationId pop)
{
    const auto& led = source.ledger();
    throw DrawCapExceeded("draw cap reached in population " + std::to_string(index_of(pop) + 1),
                          led.total(PopulationId::Pop1), led.total(PopulationId::Pop2));
}

template <SampleSource S>
std::uint64_t ibs_until(S& source, PopulationId pop, std::uint64_t target, int wanted)
{
    if (target < 1)
        throw std::invalid_argument("inverse binomial sampling needs a positive target");
    const std::uint64_t cap = source.draw_cap();
    if constexpr (requires { source.draw_until(pop, target, wanted, cap); }) {
        const std::uint64_t n = source.draw_until(pop, target, wanted, cap);
        if (n == kCapHit)
            draw_cap_abort(source, pop);
        return n;
    }
    std::uint64_t n = 0;
    std::uint64_t hits = 0;
    while (hits < target) {
        if (n >= cap)
            draw_cap_abort(source, pop);
        hits += (source.draw(pop) == wanted);
        ++n;
    }
    return n;
}

} // namespace detail

// Draws until the r-th success; returns the number of draws.
template <SampleSource S>
std::uint64_t ibs_count(S& source, PopulationId pop, std::uint64_t r)
{
    return detail::ibs_until(source, pop, r, 1);
}

// Draws until the f-th failure.
template <SampleSource S>
std::uint64_t ibs_failures_count(S& source, PopulationId pop, std::uint64_t f)
{
    return detail::ibs_until(source, pop, f, 0);
}

} // namespace seqratio
