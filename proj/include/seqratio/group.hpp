#pragma once

#include "seqratio/estimator.hpp"
#include "seqratio/sampling.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace seqratio {

struct GroupConfig {
    std::uint64_t m1 = 1;
    std::uint64_t m2 = 1;

    double tarsara() const noexcept { return static_cast<double>(m1) / static_cast<double>(m2); }
};

inline constexpr std::uint64_t kBufferWarnBits = 100'000'000ULL;

// Element-on-demand view over a source that only delivers whole groups of
// m1 population-1 and m2 population-2 observations.
template <SampleSource Inner>
class GroupedSource {
public:
    GroupedSource(Inner& inner, GroupConfig cfg) : inner_(inner), cfg_(cfg)
    {
        if (cfg.m1 < 1 || cfg.m2 < 1)
            throw ConfigError("group sizes must be positive");
    }

    int draw(PopulationId pop)
    {
        auto& q = queues_[index_of(pop)];
        if (q.empty())
            fetch_group();
        ledger_.record(pop);
        return q.pop();
    }

    SampleLedger& ledger() noexcept { return ledger_; }
    std::uint64_t draw_cap() const noexcept { return inner_.draw_cap(); }

    std::uint64_t groups_taken() const noexcept { return groups_; }
    std::uint64_t buffered(PopulationId pop) const noexcept { return queues_[index_of(pop)].size(); }
    bool buffer_warning() const noexcept { return warned_; }
    const GroupConfig& config() const noexcept { return cfg_; }

private:
    struct BitQueue {
        std::vector<unsigned char> bits;
        std::size_t head = 0;

        bool empty() const noexcept { return head == bits.size(); }
        std::uint64_t size() const noexcept { return bits.size() - head; }
        void push(int b) { bits.push_back(static_cast<unsigned char>(b)); }
        int pop() noexcept
        {
            const int b = bits[head++];
            if (head == bits.size()) {
                bits.clear();
                head = 0;
            }
            return b;
        }
        void compact()
        {
            if (head > 4096 && head * 2 > bits.size()) {
                bits.erase(bits.begin(), bits.begin() + static_cast<std::ptrdiff_t>(head));
                head = 0;
            }
        }
    };

    void fetch_group()
    {
        for (std::uint64_t i = 0; i < cfg_.m1; ++i)
            queues_[0].push(inner_.draw(PopulationId::Pop1));
        for (std::uint64_t i = 0; i < cfg_.m2; ++i)
            queues_[1].push(inner_.draw(PopulationId::Pop2));
        queues_[0].compact();
        queues_[1].compact();
        ++groups_;
        if (queues_[0].size() + queues_[1].size() > kBufferWarnBits)
            warned_ = true;
    }

    Inner& inner_;
    GroupConfig cfg_;
    std::array<BitQueue, 2> queues_;
    SampleLedger ledger_;
    std::uint64_t groups_ = 0;
    bool warned_ = false;
};

// G = max(ceil(N1/m1), ceil(N2/m2)) for element demands N1, N2.
inline std::uint64_t groups_required(std::uint64_t n1, std::uint64_t n2, const GroupConfig& cfg)
{
    const std::uint64_t g1 = (n1 + cfg.m1 - 1) / cfg.m1;
    const std::uint64_t g2 = (n2 + cfg.m2 - 1) / cfg.m2;
    return g1 > g2 ? g1 : g2;
}

template <SampleSource Inner>
EstimateResult estimate_grouped(const DesignParams& d, GroupedSource<Inner>& gsource, AuxStreams& aux)
{
    EstimateResult res = estimate(d, gsource, aux);
    res.groups_used = gsource.groups_taken();
    res.discarded1 = gsource.buffered(PopulationId::Pop1);
    res.discarded2 = gsource.buffered(PopulationId::Pop2);
    res.buffer_warning = gsource.buffer_warning();
    return res;
}

} // namespace seqratio
