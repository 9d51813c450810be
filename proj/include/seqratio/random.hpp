#pragma once

#include <cstdint>

namespace seqratio {

// Sub-stream tags. Each replication owns one stream per tag.
enum class StreamTag : std::uint64_t {
    Pop1 = 1,
    Pop2 = 2,
    Rounding = 3,
    Factory = 4,
};

inline constexpr std::uint64_t mix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

struct StreamKey {
    std::uint64_t seed = 0;
    std::uint64_t cell = 0;
    std::uint64_t replication = 0;
};

// xoshiro256++ whose state is a pure function of (seed, cell, replication, tag),
// so a replication sees the same bits whatever thread or order runs it.
class Stream {
public:
    Stream() : Stream(StreamKey{}, StreamTag::Pop1) {}

    Stream(const StreamKey& key, StreamTag tag) noexcept
    {
        std::uint64_t h = mix64(key.seed);
        h = mix64(h ^ mix64(key.cell + 0x632be59bd9b4e019ULL));
        h = mix64(h ^ mix64(key.replication + 0x8cb92ba72f3d8dd7ULL));
        h = mix64(h ^ static_cast<std::uint64_t>(tag));
        for (auto& w : s_) {
            h = mix64(h);
            w = h;
        }
    }

    std::uint64_t next() noexcept
    {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform on [0,1) with 53 random bits
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    bool coin() noexcept { return (next() >> 63) != 0; }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept
    {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t s_[4];
};

// Integer threshold t with P(next() < t) = p up to 2^-64.
inline std::uint64_t bernoulli_threshold(double p) noexcept
{
    if (p <= 0.0)
        return 0;
    if (p >= 1.0)
        return ~std::uint64_t{0};
    return static_cast<std::uint64_t>(p * 0x1.0p64);
}

} // namespace seqratio
