#include "seqratio/seqratio.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

using namespace seqratio;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kProtocol = 3, kDrawCap = 4 };

struct Options {
    std::string kind = "rr";
    std::vector<double> tarvar;
    double tarsara = 1.0;
    std::vector<std::uint64_t> groups;
    std::vector<double> p1, p2, ratio, scale;
    std::uint64_t reps = 100'000;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    std::uint64_t chunk = 4096;
    std::string out;
    bool full = false;
    std::string input = "synthetic";
    std::uint64_t draw_cap = kDefaultDrawCap;
    std::vector<double> sweep{1e-3, 1.0};
    std::uint64_t points = 61;
};

std::optional<GroupConfig> group_config(const Options& o)
{
    if (o.groups.empty())
        return std::nullopt;
    if (o.groups.size() != 2)
        throw ConfigError("groups: expected m1,m2");
    return GroupConfig{o.groups[0], o.groups[1]};
}

std::vector<std::pair<double, double>> population_grid(const Options& o)
{
    std::vector<std::pair<double, double>> grid;
    if (!o.p1.empty() || !o.p2.empty()) {
        if (o.p1.size() != o.p2.size())
            throw ConfigError("p1/p2: lists differ in length");
        for (std::size_t i = 0; i < o.p1.size(); ++i)
            grid.emplace_back(o.p1[i], o.p2[i]);
    } else if (!o.ratio.empty() || !o.scale.empty()) {
        if (o.ratio.size() != o.scale.size())
            throw ConfigError("ratio/scale: lists differ in length");
        for (std::size_t i = 0; i < o.ratio.size(); ++i) {
            if (!(o.ratio[i] > 0.0) || !(o.scale[i] > 0.0))
                throw ConfigError("ratio/scale: values must be positive");
            grid.push_back(probs_from_ratio_scale(o.ratio[i], o.scale[i]));
        }
    }
    for (const auto& [a, b] : grid)
        if (!(a > 0.0 && a < 1.0) || !(b > 0.0 && b < 1.0))
            throw ConfigError("p1/p2: probabilities must lie in (0,1)");
    return grid;
}

double single_tarvar(const Options& o)
{
    if (o.tarvar.size() != 1)
        throw ConfigError("tarvar: exactly one value expected");
    return o.tarvar[0];
}

void warn_range(const std::vector<double>& tarvars)
{
    for (double t : tarvars)
        if (t > 1.0)
            std::cerr << "warning: tarvar " << t << " is outside the studied range (0,1]\n";
}

void print_kv(std::string_view key, double v) { std::cout << key << '=' << detail::fmt_real(v) << '\n'; }
void print_kv(std::string_view key, std::uint64_t v) { std::cout << key << '=' << v << '\n'; }
void print_kv(std::string_view key, std::string_view v) { std::cout << key << '=' << v << '\n'; }

int run_design(const Options& o)
{
    const Kind kind = parse_kind(o.kind);
    const double tarvar = single_tarvar(o);
    warn_range(o.tarvar);
    const auto grp = group_config(o);
    const auto d = derive_design(tarvar, grp ? grp->tarsara() : o.tarsara, kind);
    const auto k = constants(kind);
    const auto c = first_order_coeffs(d);
    print_kv("kind", kind_name(kind));
    print_kv("tarvar", d.tarvar);
    print_kv("tarsara", d.tarsara);
    print_kv("c1", k.c1);
    print_kv("c2", k.c2);
    print_kv("c12", k.c12);
    print_kv("alpha", static_cast<double>(k.alpha));
    print_kv("suf1", d.suf1);
    print_kv("suf2", d.suf2);
    print_kv("cdemul", d.cdemul);
    print_kv("cdeadd1", d.cdeadd1);
    print_kv("cdeadd2", d.cdeadd2);
    print_kv("cdesm1", d.cdesm1);
    print_kv("cdesm2", d.cdesm2);
    print_kv("susrou", d.susrou);
    print_kv("curvature", curvature_fn(d.tarvar, static_cast<double>(d.suf1), d.susrou, kind));
    print_kv("csusco1", c.csusco1);
    print_kv("csusva1", c.csusva1);
    print_kv("csusco2", c.csusco2);
    print_kv("csusva2", c.csusva2);
    print_kv("outside_studied_range", d.outside_studied_range ? "true" : "false");
    return kOk;
}

void print_result(const EstimateResult& r)
{
    print_kv("kind", kind_name(r.kind));
    print_kv("estimate", r.point_estimate);
    print_kv("vasaf1", r.stage1.vasaf1);
    print_kv("vasaf2", r.stage1.vasaf2);
    print_kv("varaf", r.stage1.varaf);
    print_kv("sus1_real", r.sus_real.sus1_real);
    print_kv("sus2_real", r.sus_real.sus2_real);
    print_kv("sus1", r.sus.sus1);
    print_kv("sus2", r.sus.sus2);
    print_kv("n1", r.ledger.total(PopulationId::Pop1));
    print_kv("n2", r.ledger.total(PopulationId::Pop2));
    if (r.groups_used) {
        print_kv("groups", *r.groups_used);
        print_kv("discarded1", r.discarded1);
        print_kv("discarded2", r.discarded2);
    }
}

int run_estimate(const Options& o)
{
    const Kind kind = parse_kind(o.kind);
    const double tarvar = single_tarvar(o);
    warn_range(o.tarvar);
    const auto grp = group_config(o);
    const auto d = derive_design(tarvar, grp ? grp->tarsara() : o.tarsara, kind);
    const StreamKey key{o.seed, 0, 0};
    AuxStreams aux(key);

    auto run = [&](auto& source) {
        source.set_draw_cap(o.draw_cap);
        if (grp) {
            GroupedSource gsrc(source, *grp);
            const auto r = estimate_grouped(d, gsrc, aux);
            if (r.buffer_warning)
                std::cerr << "warning: more than " << kBufferWarnBits << " buffered observations\n";
            return r;
        }
        return estimate(d, source, aux);
    };

    if (o.input == "external") {
        ExternalSource src(std::cin, std::cout);
        print_result(run(src));
        return kOk;
    }
    if (o.input != "synthetic")
        throw ConfigError("input: expected synthetic or external");
    const auto grid = population_grid(o);
    if (grid.size() != 1)
        throw ConfigError("p1/p2: exactly one population pair expected");
    SyntheticSource src(grid[0].first, grid[0].second, key);
    const auto r = run(src);
    print_kv("true_value", true_value(kind, grid[0].first, grid[0].second));
    print_result(r);
    return kOk;
}

void emit_rows(const std::vector<SummaryRow>& rows, const std::string& out)
{
    if (out.empty() || out == "-")
        write_csv_stream(rows, std::cout);
    else
        write_csv(rows, out);
}

int run_simulate(const Options& o, bool reps_given)
{
    ExperimentSpec spec;
    spec.kind = parse_kind(o.kind);
    spec.tarvars = o.tarvar;
    spec.tarsara = o.tarsara;
    spec.groups = group_config(o);
    spec.probs = population_grid(o);
    spec.reps = o.full && !reps_given ? 1'000'000 : o.reps;
    spec.seed = o.seed;
    spec.threads = o.threads;
    spec.chunk = o.chunk;
    warn_range(spec.tarvars);
    const auto rows = run_experiment(spec);
    for (const auto& r : rows)
        if (r.buffer_warning)
            std::cerr << "warning: buffered observations exceeded " << kBufferWarnBits << " at tarvar " << r.tarvar
                      << "\n";
    emit_rows(rows, o.out);
    return kOk;
}

int run_theory(const Options& o)
{
    const Kind kind = parse_kind(o.kind);
    std::vector<double> tarvars = o.tarvar;
    if (tarvars.empty()) {
        if (o.sweep.size() != 2)
            throw ConfigError("sweep: expected lo,hi");
        tarvars = log_sweep(o.sweep[0], o.sweep[1], o.points);
    }
    for (double t : tarvars)
        if (!(t > 0.0))
            throw ConfigError("tarvar: values must be positive");
    if (!(o.tarsara > 0.0))
        throw ConfigError("tarsara: must be positive");
    auto grid = population_grid(o);
    if (grid.empty())
        grid.push_back(probs_from_ratio_scale(1.0, 0.01));
    const auto grp = group_config(o);
    if (grp && (grp->m1 < 1 || grp->m2 < 1))
        throw ConfigError("groups: sizes must be positive");
    std::vector<SummaryRow> rows;
    for (double t : tarvars)
        for (const auto& [a, b] : grid)
            rows.push_back(theory_row(kind, t, o.tarsara, grp, a, b));
    emit_rows(rows, o.out);
    return kOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Two-stage sequential estimation of RR, LRR, OR and LOR with guaranteed MSE"};
    app.set_config("--config", "", "read options from a key=value file; command-line flags take precedence");
    app.require_subcommand(1);

    Options o;
    app.add_option("--kind", o.kind, "rr, lrr, or or lor")->capture_default_str();
    app.add_option("--tarvar", o.tarvar, "target (relative) MSE; a list for simulate and theory")->delimiter(',');
    auto* tarsara = app.add_option("--tarsara", o.tarsara, "target ratio of average sample sizes")->capture_default_str();
    app.add_option("--groups", o.groups, "group sizes m1,m2")->delimiter(',')->expected(2)->excludes(tarsara);
    auto* p1 = app.add_option("--p1", o.p1, "population 1 probability (list)")->delimiter(',');
    auto* p2 = app.add_option("--p2", o.p2, "population 2 probability (list)")->delimiter(',');
    app.add_option("--ratio", o.ratio, "ratio r = p1/p2 (list)")->delimiter(',')->excludes(p1)->excludes(p2);
    app.add_option("--scale", o.scale, "scale s = sqrt(p1*p2) (list)")->delimiter(',')->excludes(p1)->excludes(p2);
    auto* reps = app.add_option("--reps", o.reps, "replications per cell")->capture_default_str();
    app.add_option("--seed", o.seed, "master seed")->capture_default_str();
    app.add_option("--threads", o.threads, "worker threads")->capture_default_str();
    app.add_option("--chunk", o.chunk, "replications per work unit")->capture_default_str();
    app.add_option("--out", o.out, "output CSV path (stdout if empty)");
    app.add_flag("--full", o.full, "use 10^6 replications unless --reps is given");
    app.add_option("--input", o.input, "synthetic or external")->capture_default_str();
    app.add_option("--draw-cap", o.draw_cap, "maximum draws per sampling loop")->capture_default_str();
    app.add_option("--sweep", o.sweep, "tarvar range lo,hi for theory curves")->delimiter(',')->expected(2);
    app.add_option("--points", o.points, "number of tarvar points for theory curves")->capture_default_str();

    auto* design = app.add_subcommand("design", "print derived design constants")->fallthrough();
    auto* estimate_cmd = app.add_subcommand("estimate", "run one estimation")->fallthrough();
    auto* simulate = app.add_subcommand("simulate", "Monte Carlo summary as CSV")->fallthrough();
    auto* theory = app.add_subcommand("theory", "closed-form bounds and approximations as CSV")->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfig;
    }

    try {
        if (design->parsed())
            return run_design(o);
        if (estimate_cmd->parsed())
            return run_estimate(o);
        if (simulate->parsed())
            return run_simulate(o, reps->count() > 0);
        if (theory->parsed())
            return run_theory(o);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kConfig;
    } catch (const ProtocolError& e) {
        std::cerr << "protocol error: " << e.what() << "\n";
        return kProtocol;
    } catch (const DrawCapExceeded& e) {
        std::cerr << "draw cap exceeded: " << e.what() << " (draws so far: " << e.draws_pop1 << ", "
                  << e.draws_pop2 << ")\n";
        return kDrawCap;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kFailure;
}
