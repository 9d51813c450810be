#pragma once

#include "seqratio/design.hpp"
#include "seqratio/estimator.hpp"
#include "seqratio/group.hpp"
#include "seqratio/sampling.hpp"
#include "seqratio/theory.hpp"

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace seqratio {

struct ExperimentSpec {
    Kind kind = Kind::RR;
    std::vector<double> tarvars;
    double tarsara = 1.0;
    std::optional<GroupConfig> groups;
    std::vector<std::pair<double, double>> probs;
    std::uint64_t reps = 100'000;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    std::uint64_t chunk = 4096;

    double effective_tarsara() const { return groups ? groups->tarsara() : tarsara; }
};

inline void validate(const ExperimentSpec& spec)
{
    if (spec.tarvars.empty())
        throw ConfigError("tarvar: list is empty");
    for (double t : spec.tarvars)
        if (!(t > 0.0))
            throw ConfigError("tarvar: values must be positive");
    if (!(spec.tarsara > 0.0))
        throw ConfigError("tarsara: must be positive");
    if (spec.groups && (spec.groups->m1 < 1 || spec.groups->m2 < 1))
        throw ConfigError("groups: sizes must be positive");
    if (spec.probs.empty())
        throw ConfigError("p1/p2: population grid is empty");
    for (const auto& [a, b] : spec.probs)
        if (!(a > 0.0 && a < 1.0) || !(b > 0.0 && b < 1.0))
            throw ConfigError("p1/p2: probabilities must lie in (0,1)");
    if (spec.reps < 1)
        throw ConfigError("reps: must be at least 1");
    if (spec.chunk < 1)
        throw ConfigError("chunk: must be at least 1");
}

// Sums over replications of one cell. Integer counts are kept exact.
struct CellAccum {
    std::uint64_t count = 0;
    double sum_est = 0.0;
    double sum_e = 0.0;
    double sum_e2 = 0.0;
    double sum_e4 = 0.0;
    std::uint64_t total_n1 = 0;
    std::uint64_t total_n2 = 0;
    double sum_n1_sq = 0.0;
    double sum_n2_sq = 0.0;
    double sum_sus1 = 0.0;
    double sum_sus1_sq = 0.0;
    double sum_sus2 = 0.0;
    double sum_sus2_sq = 0.0;
    std::map<std::uint64_t, std::uint64_t> sus2_hist;
    std::uint64_t total_groups = 0;
    double sum_groups_sq = 0.0;
    std::uint64_t group_identity_ok = 0;
    std::uint64_t discard_ok = 0;
    bool buffer_warning = false;

    void add(const EstimateResult& r, double theta, const GroupConfig* grp)
    {
        ++count;
        const double e = r.point_estimate - theta;
        const double e2 = e * e;
        sum_est += r.point_estimate;
        sum_e += e;
        sum_e2 += e2;
        sum_e4 += e2 * e2;
        const std::uint64_t n1 = r.ledger.total(PopulationId::Pop1);
        const std::uint64_t n2 = r.ledger.total(PopulationId::Pop2);
        total_n1 += n1;
        total_n2 += n2;
        sum_n1_sq += static_cast<double>(n1) * static_cast<double>(n1);
        sum_n2_sq += static_cast<double>(n2) * static_cast<double>(n2);
        sum_sus1 += r.sus_real.sus1_real;
        sum_sus1_sq += r.sus_real.sus1_real * r.sus_real.sus1_real;
        sum_sus2 += r.sus_real.sus2_real;
        sum_sus2_sq += r.sus_real.sus2_real * r.sus_real.sus2_real;
        ++sus2_hist[r.sus.sus2];
        buffer_warning = buffer_warning || r.buffer_warning;
        if (grp && r.groups_used) {
            const std::uint64_t g = *r.groups_used;
            total_groups += g;
            sum_groups_sq += static_cast<double>(g) * static_cast<double>(g);
            if (g == groups_required(n1, n2, *grp))
                ++group_identity_ok;
            if (r.discarded1 < grp->m1 || r.discarded2 < grp->m2)
                ++discard_ok;
        }
    }

    void merge(const CellAccum& o)
    {
        count += o.count;
        sum_est += o.sum_est;
        sum_e += o.sum_e;
        sum_e2 += o.sum_e2;
        sum_e4 += o.sum_e4;
        total_n1 += o.total_n1;
        total_n2 += o.total_n2;
        sum_n1_sq += o.sum_n1_sq;
        sum_n2_sq += o.sum_n2_sq;
        sum_sus1 += o.sum_sus1;
        sum_sus1_sq += o.sum_sus1_sq;
        sum_sus2 += o.sum_sus2;
        sum_sus2_sq += o.sum_sus2_sq;
        for (const auto& [k, v] : o.sus2_hist)
            sus2_hist[k] += v;
        total_groups += o.total_groups;
        sum_groups_sq += o.sum_groups_sq;
        group_identity_ok += o.group_identity_ok;
        discard_ok += o.discard_ok;
        buffer_warning = buffer_warning || o.buffer_warning;
    }
};

inline constexpr double kAbsent = std::numeric_limits<double>::quiet_NaN();

struct SummaryRow {
    Kind kind = Kind::RR;
    double tarvar = 0.0;
    double tarsara = 1.0;
    std::uint64_t m1 = 0;  // 0 in element mode
    std::uint64_t m2 = 0;
    double p1 = 0.0;
    double p2 = 0.0;
    double ratio_param = 0.0;
    double scale_param = 0.0;
    std::uint64_t reps = 0;
    std::uint64_t seed = 0;
    std::uint64_t suf1 = 0;
    std::uint64_t suf2 = 0;

    double true_value = 0.0;
    double mean_estimate = 0.0;
    double bias = 0.0;
    double bias_se = kAbsent;
    double mse = 0.0;  // relative for RR/OR
    double mse_se = kAbsent;
    std::uint64_t total_n1 = 0;
    std::uint64_t total_n2 = 0;
    double mean_n1 = 0.0;
    double mean_n1_se = kAbsent;
    double mean_n2 = 0.0;
    double mean_n2_se = kAbsent;
    double ratio_n = 0.0;
    double norm_n1 = 0.0;
    double norm_n2 = 0.0;
    double norm_n1_se = kAbsent;
    double norm_n2_se = kAbsent;
    double mean_sus1_real = 0.0;
    double sd_sus1_real = kAbsent;
    double mean_sus2_real = 0.0;
    double sd_sus2_real = kAbsent;
    std::uint64_t sus2_mode = 0;
    double sus2_mode_frac = 0.0;
    std::map<std::uint64_t, std::uint64_t> sus2_hist;

    double mean_groups = kAbsent;
    double mean_groups_se = kAbsent;
    double norm_groups = kAbsent;
    double group_identity_frac = kAbsent;
    double discard_ok_frac = kAbsent;
    bool buffer_warning = false;

    double efficiency = kAbsent;
    double efficiency_group = kAbsent;

    double bound_n1 = 0.0;
    double bound_n2 = 0.0;
    double efficiency_bound = 0.0;
    double groups_approx = kAbsent;
    double efficiency_group_approx = kAbsent;

    bool group_mode() const { return m1 > 0; }

    double sus2_frac(std::uint64_t v) const
    {
        const auto it = sus2_hist.find(v);
        return it == sus2_hist.end() ? 0.0
                                     : static_cast<double>(it->second) / static_cast<double>(reps);
    }
};

enum class EfficiencyMode { Element, Group };

// Sample means and sample MSE plugged into the efficiency definition.
inline double empirical_efficiency(const SummaryRow& row, EfficiencyMode mode)
{
    if (!(row.mse > 0.0))
        return kAbsent;
    const bool factory = constants(row.kind).factory;
    const double q1 = factory ? row.p1 * (1.0 - row.p1) : row.p1 / (1.0 - row.p1);
    const double q2 = factory ? row.p2 * (1.0 - row.p2) : row.p2 / (1.0 - row.p2);
    if (mode == EfficiencyMode::Element) {
        if (!(row.mean_n1 > 0.0) || !(row.mean_n2 > 0.0))
            return kAbsent;
        return (1.0 / (row.mean_n1 * q1) + 1.0 / (row.mean_n2 * q2)) / row.mse;
    }
    if (!row.group_mode() || !(row.mean_groups > 0.0))
        return kAbsent;
    const double num = 1.0 / (static_cast<double>(row.m1) * q1) + 1.0 / (static_cast<double>(row.m2) * q2);
    return num / (row.mean_groups * row.mse);
}

namespace detail {

inline double mean_se(double sum, double sum_sq, std::uint64_t n)
{
    if (n < 2)
        return kAbsent;
    const double nd = static_cast<double>(n);
    const double m = sum / nd;
    const double var = std::max(0.0, (sum_sq - nd * m * m) / (nd - 1.0));
    return std::sqrt(var / nd);
}

inline double sample_sd(double sum, double sum_sq, std::uint64_t n)
{
    if (n < 2)
        return kAbsent;
    const double nd = static_cast<double>(n);
    const double m = sum / nd;
    return std::sqrt(std::max(0.0, (sum_sq - nd * m * m) / (nd - 1.0)));
}

inline SummaryRow summarize(const ExperimentSpec& spec, const DesignParams& d, double p1, double p2,
                            const CellAccum& acc)
{
    SummaryRow row;
    const auto k = constants(spec.kind);
    row.kind = spec.kind;
    row.tarvar = d.tarvar;
    row.tarsara = d.tarsara;
    if (spec.groups) {
        row.m1 = spec.groups->m1;
        row.m2 = spec.groups->m2;
    }
    row.p1 = p1;
    row.p2 = p2;
    const auto rs = ratio_scale(spec.kind, p1, p2);
    row.ratio_param = rs.ratio;
    row.scale_param = rs.scale;
    row.reps = acc.count;
    row.seed = spec.seed;
    row.suf1 = d.suf1;
    row.suf2 = d.suf2;

    const double n = static_cast<double>(acc.count);
    const double theta = true_value(spec.kind, p1, p2);
    const double norm = k.relative ? theta * theta : 1.0;
    row.true_value = theta;
    row.mean_estimate = acc.sum_est / n;
    row.bias = acc.sum_e / n;
    row.bias_se = mean_se(acc.sum_e, acc.sum_e2, acc.count);
    row.mse = acc.sum_e2 / n / norm;
    const double se4 = mean_se(acc.sum_e2, acc.sum_e4, acc.count);
    row.mse_se = std::isnan(se4) ? kAbsent : se4 / norm;

    row.total_n1 = acc.total_n1;
    row.total_n2 = acc.total_n2;
    row.mean_n1 = static_cast<double>(acc.total_n1) / n;
    row.mean_n2 = static_cast<double>(acc.total_n2) / n;
    row.mean_n1_se = mean_se(static_cast<double>(acc.total_n1), acc.sum_n1_sq, acc.count);
    row.mean_n2_se = mean_se(static_cast<double>(acc.total_n2), acc.sum_n2_sq, acc.count);
    row.ratio_n = row.mean_n1 / row.mean_n2;
    row.norm_n1 = row.mean_n1 * rs.scale;
    row.norm_n2 = row.mean_n2 * rs.scale;
    row.norm_n1_se = row.mean_n1_se * rs.scale;
    row.norm_n2_se = row.mean_n2_se * rs.scale;

    row.mean_sus1_real = acc.sum_sus1 / n;
    row.sd_sus1_real = sample_sd(acc.sum_sus1, acc.sum_sus1_sq, acc.count);
    row.mean_sus2_real = acc.sum_sus2 / n;
    row.sd_sus2_real = sample_sd(acc.sum_sus2, acc.sum_sus2_sq, acc.count);
    row.sus2_hist = acc.sus2_hist;
    std::uint64_t best = 0;
    for (const auto& [v, c] : acc.sus2_hist) {
        if (c > best) {
            best = c;
            row.sus2_mode = v;
        }
    }
    row.sus2_mode_frac = static_cast<double>(best) / n;

    row.bound_n1 = avg_size_bound(spec.kind, d.tarvar, d.tarsara, rs.ratio, PopulationId::Pop1);
    row.bound_n2 = avg_size_bound(spec.kind, d.tarvar, d.tarsara, rs.ratio, PopulationId::Pop2);
    row.efficiency_bound = efficiency_bound_element(spec.kind, d.tarvar, d.tarsara, rs.ratio, rs.scale);
    row.efficiency = empirical_efficiency(row, EfficiencyMode::Element);

    if (spec.groups) {
        const double m1 = static_cast<double>(spec.groups->m1);
        const double m2 = static_cast<double>(spec.groups->m2);
        row.mean_groups = static_cast<double>(acc.total_groups) / n;
        row.mean_groups_se = mean_se(static_cast<double>(acc.total_groups), acc.sum_groups_sq, acc.count);
        row.norm_groups = row.mean_groups * rs.scale;
        row.group_identity_frac = static_cast<double>(acc.group_identity_ok) / n;
        row.discard_ok_frac = static_cast<double>(acc.discard_ok) / n;
        row.buffer_warning = acc.buffer_warning;
        row.groups_approx = expected_groups_approx(spec.kind, d.tarvar, m1, m2, rs.ratio);
        row.efficiency_group_approx = efficiency_group_approx(spec.kind, d.tarvar, m1, m2, p1, p2);
        row.efficiency_group = empirical_efficiency(row, EfficiencyMode::Group);
    }
    return row;
}

template <class Body>
void parallel_for(std::uint64_t units, unsigned threads, Body&& body)
{
    std::atomic<std::uint64_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const std::uint64_t u = next.fetch_add(1);
            if (u >= units)
                return;
            try {
                body(u);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure)
                    failure = std::current_exception();
                next.store(units);
                return;
            }
        }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::min<std::uint64_t>(units, 1024))));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n);
        for (unsigned i = 0; i < n; ++i)
            pool.emplace_back(worker);
        for (auto& t : pool)
            t.join();
    }
    if (failure)
        std::rethrow_exception(failure);
}

} // namespace detail

// One replication on stream (seed, cell, rep).
inline EstimateResult run_replication(const DesignParams& d, double p1, double p2,
                                      const std::optional<GroupConfig>& groups, const StreamKey& key)
{
    SyntheticSource src(p1, p2, key);
    AuxStreams aux(key);
    if (groups) {
        GroupedSource<SyntheticSource> gsrc(src, *groups);
        return estimate_grouped(d, gsrc, aux);
    }
    return estimate(d, src, aux);
}

inline std::vector<SummaryRow> run_experiment(const ExperimentSpec& spec)
{
    validate(spec);
    const double tarsara = spec.effective_tarsara();
    std::vector<DesignParams> designs;
    for (double t : spec.tarvars)
        designs.push_back(derive_design(t, tarsara, spec.kind));

    const std::uint64_t ncells = spec.tarvars.size() * spec.probs.size();
    const std::uint64_t chunks = (spec.reps + spec.chunk - 1) / spec.chunk;
    const std::uint64_t units = ncells * chunks;
    std::vector<CellAccum> partial(units);

    detail::parallel_for(units, spec.threads, [&](std::uint64_t u) {
        const std::uint64_t cell = u / chunks;
        const std::uint64_t c = u % chunks;
        const auto& d = designs[cell / spec.probs.size()];
        const auto [p1, p2] = spec.probs[cell % spec.probs.size()];
        const double theta = true_value(spec.kind, p1, p2);
        const GroupConfig* grp = spec.groups ? &*spec.groups : nullptr;
        CellAccum acc;
        const std::uint64_t end = std::min(spec.reps, (c + 1) * spec.chunk);
        for (std::uint64_t rep = c * spec.chunk; rep < end; ++rep) {
            const auto res = run_replication(d, p1, p2, spec.groups, StreamKey{spec.seed, cell, rep});
            acc.add(res, theta, grp);
        }
        partial[u] = std::move(acc);
    });

    std::vector<SummaryRow> rows;
    rows.reserve(ncells);
    for (std::uint64_t cell = 0; cell < ncells; ++cell) {
        CellAccum total;
        for (std::uint64_t c = 0; c < chunks; ++c)
            total.merge(partial[cell * chunks + c]);
        const auto& d = designs[cell / spec.probs.size()];
        const auto [p1, p2] = spec.probs[cell % spec.probs.size()];
        rows.push_back(detail::summarize(spec, d, p1, p2, total));
    }
    return rows;
}

// Closed-form columns only; simulated columns are absent.
inline SummaryRow theory_row(Kind kind, double tarvar, double tarsara, const std::optional<GroupConfig>& groups,
                             double p1, double p2)
{
    if (groups)
        tarsara = groups->tarsara();
    const auto d = derive_design(tarvar, tarsara, kind);
    const auto rs = ratio_scale(kind, p1, p2);
    SummaryRow row;
    row.kind = kind;
    row.tarvar = tarvar;
    row.tarsara = tarsara;
    row.p1 = p1;
    row.p2 = p2;
    row.ratio_param = rs.ratio;
    row.scale_param = rs.scale;
    row.suf1 = d.suf1;
    row.suf2 = d.suf2;
    row.true_value = true_value(kind, p1, p2);
    for (double* v : {&row.mean_estimate, &row.bias, &row.mse, &row.mean_n1, &row.mean_n2, &row.ratio_n,
                      &row.norm_n1, &row.norm_n2, &row.mean_sus1_real, &row.mean_sus2_real, &row.sus2_mode_frac})
        *v = kAbsent;
    row.bound_n1 = avg_size_bound(kind, tarvar, tarsara, rs.ratio, PopulationId::Pop1);
    row.bound_n2 = avg_size_bound(kind, tarvar, tarsara, rs.ratio, PopulationId::Pop2);
    row.efficiency_bound = efficiency_bound_element(kind, tarvar, tarsara, rs.ratio, rs.scale);
    if (groups) {
        row.m1 = groups->m1;
        row.m2 = groups->m2;
        const double m1 = static_cast<double>(groups->m1);
        const double m2 = static_cast<double>(groups->m2);
        row.groups_approx = expected_groups_approx(kind, tarvar, m1, m2, rs.ratio);
        row.efficiency_group_approx = efficiency_group_approx(kind, tarvar, m1, m2, p1, p2);
    }
    return row;
}

// points values from lo to hi, evenly spaced in log scale
inline std::vector<double> log_sweep(double lo, double hi, std::uint64_t points)
{
    if (!(lo > 0.0) || !(hi >= lo) || points < 1)
        throw ConfigError("sweep: need 0 < lo <= hi and at least one point");
    std::vector<double> out;
    if (points == 1)
        return {lo};
    const double step = std::log(hi / lo) / static_cast<double>(points - 1);
    for (std::uint64_t i = 0; i < points; ++i)
        out.push_back(lo * std::exp(step * static_cast<double>(i)));
    return out;
}

namespace detail {

inline std::string fmt_real(double v)
{
    if (std::isnan(v))
        return {};
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.15g", v);
    return buf;
}

inline std::string fmt_int(std::uint64_t v) { return std::to_string(v); }

} // namespace detail

inline const std::vector<std::string>& summary_columns()
{
    static const std::vector<std::string> cols = {
        "kind", "tarvar", "tarsara", "m1", "m2", "p1", "p2", "ratio_param", "scale_param", "reps",
        "seed", "suf1", "suf2", "true_value", "mean_estimate", "bias", "bias_se", "mse", "mse_se",
        "mean_n1", "mean_n1_se", "mean_n2", "mean_n2_se", "ratio_n", "norm_n1", "norm_n2",
        "bound_n1", "bound_n2", "efficiency", "efficiency_bound", "mean_sus1_real",
        "sd_sus1_real", "mean_sus2_real", "sd_sus2_real", "sus2_mode", "sus2_mode_frac",
        "mean_groups", "mean_groups_se", "norm_groups", "groups_approx", "efficiency_group",
        "efficiency_group_approx", "group_identity_frac"};
    return cols;
}

inline std::vector<std::string> row_fields(const SummaryRow& r)
{
    using detail::fmt_int;
    using detail::fmt_real;
    return {std::string(kind_name(r.kind)), fmt_real(r.tarvar), fmt_real(r.tarsara),
            r.group_mode() ? fmt_int(r.m1) : std::string{}, r.group_mode() ? fmt_int(r.m2) : std::string{},
            fmt_real(r.p1), fmt_real(r.p2), fmt_real(r.ratio_param), fmt_real(r.scale_param),
            fmt_int(r.reps), fmt_int(r.seed), fmt_int(r.suf1), fmt_int(r.suf2),
            fmt_real(r.true_value), fmt_real(r.mean_estimate), fmt_real(r.bias), fmt_real(r.bias_se),
            fmt_real(r.mse), fmt_real(r.mse_se), fmt_real(r.mean_n1), fmt_real(r.mean_n1_se),
            fmt_real(r.mean_n2), fmt_real(r.mean_n2_se), fmt_real(r.ratio_n), fmt_real(r.norm_n1),
            fmt_real(r.norm_n2), fmt_real(r.bound_n1), fmt_real(r.bound_n2), fmt_real(r.efficiency),
            fmt_real(r.efficiency_bound), fmt_real(r.mean_sus1_real), fmt_real(r.sd_sus1_real),
            fmt_real(r.mean_sus2_real), fmt_real(r.sd_sus2_real), fmt_int(r.sus2_mode),
            fmt_real(r.sus2_mode_frac), fmt_real(r.mean_groups), fmt_real(r.mean_groups_se),
            fmt_real(r.norm_groups), fmt_real(r.groups_approx), fmt_real(r.efficiency_group),
            fmt_real(r.efficiency_group_approx), fmt_real(r.group_identity_frac)};
}

inline void write_csv_stream(const std::vector<SummaryRow>& rows, std::ostream& out)
{
    const auto& cols = summary_columns();
    for (std::size_t i = 0; i < cols.size(); ++i)
        out << (i ? "," : "") << cols[i];
    out << '\n';
    for (const auto& r : rows) {
        const auto f = row_fields(r);
        for (std::size_t i = 0; i < f.size(); ++i)
            out << (i ? "," : "") << f[i];
        out << '\n';
    }
}

inline void write_csv(const std::vector<SummaryRow>& rows, const std::filesystem::path& path)
{
    if (rows.empty())
        throw std::invalid_argument("no rows to write to " + path.string());
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_csv_stream(rows, out);
    out.flush();
    if (!out)
        throw std::runtime_error("write failed for " + path.string());
}

} // namespace seqratio
