#pragma once

// Analyzer, report and named scenarios with reproducible manifests.

#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "rmv/config.hpp"
#include "rmv/io.hpp"
#include "rmv/metrics.hpp"

namespace rmv::exp {

namespace fs = std::filesystem;
using io::json;

struct Verdict {
    std::string name;
    bool passed = false;
    std::string detail;
};

inline json to_json(const std::vector<Verdict>& vs) {
    json a = json::array();
    for (const auto& v : vs) a.push_back({{"name", v.name}, {"passed", v.passed}, {"detail", v.detail}});
    return a;
}

/// Residual bound used for the per-step mean constraint in reports.
inline constexpr double kResidualTolerance = 1e-10;

// --- analyze ------------------------------------------------------------------------------

struct AnalyzeInputs {
    std::vector<fs::path> runs;
    std::optional<fs::path> pde;
    /// Coarser PDE solution (half the cells); its distance to `pde` is the rate-fit floor.
    std::optional<fs::path> pde_ref;
    fs::path report = "report.json";
};

namespace detail {

inline bool is_kind(const fs::path& dir, const std::string& kind) {
    const fs::path meta = dir / "run_meta.json";
    return fs::exists(meta) && io::read_json(meta).value("kind", "") == kind;
}

/// Simulate-run directories at or below each root, in sorted order.
inline std::vector<fs::path> find_runs(const std::vector<fs::path>& roots) {
    std::set<fs::path> out;
    for (const auto& r : roots) {
        if (!fs::is_directory(r)) throw std::runtime_error("run directory '" + r.string() + "' does not exist");
        if (is_kind(r, "simulate")) {
            out.insert(r);
            continue;
        }
        for (const auto& e : fs::recursive_directory_iterator(r))
            if (e.is_directory() && is_kind(e.path(), "simulate")) out.insert(e.path());
    }
    return {out.begin(), out.end()};
}

inline std::vector<fs::path> find_files(const std::vector<fs::path>& roots, const std::string& prefix) {
    std::set<fs::path> out;
    for (const auto& r : roots) {
        if (!fs::is_directory(r)) continue;
        for (const auto& e : fs::recursive_directory_iterator(r)) {
            const std::string name = e.path().filename().string();
            if (e.is_regular_file() && name.rfind(prefix, 0) == 0 && e.path().extension() == ".csv")
                out.insert(e.path());
        }
    }
    return {out.begin(), out.end()};
}

}  // namespace detail

/// Aggregates run directories into rate_table.csv, bv_report.csv, contraction.csv and
/// report.json next to `in.report`. Returns the report.
inline json analyze(const AnalyzeInputs& in) {
    const fs::path out = in.report.has_parent_path() ? in.report.parent_path() : fs::path(".");
    std::vector<Verdict> verdicts;
    json report = json::object();

    const auto run_dirs = detail::find_runs(in.runs);
    std::vector<io::LoadedRun> runs;
    for (const auto& d : run_dirs) runs.push_back(io::read_run(d));
    report["runs"] = runs.size();

    bool zero_drift = false;
    if (!run_dirs.empty()) {
        const json cfg = io::read_json(run_dirs.front() / "run_meta.json").value("config", json::object());
        zero_drift = cfg.contains("drift") && cfg.at("drift") == "zero";
    }

    // constraint exactness
    {
        double worst = 0.0;
        bool any = false;
        for (const auto& r : runs)
            if (r.interaction) {
                worst = std::max(worst, r.max_residual);
                any = true;
            }
        if (any)
            verdicts.push_back({"constraint_residual", worst <= kResidualTolerance,
                                fmt::format("max |mean(X)-q| = {:.3e} (bound {:.0e})", worst, kResidualTolerance)});
    }

    // rate table against the PDE
    if (in.pde && !runs.empty()) {
        const FpeRun pde = io::read_fpe(*in.pde);
        double floor = 0.0;
        if (in.pde_ref) floor = pde_floor(pde, io::read_fpe(*in.pde_ref));

        std::map<std::uint64_t, std::vector<const io::LoadedRun*>> by_seed;
        for (const auto& r : runs)
            if (r.interaction) by_seed[r.record.seed].push_back(&r);
        std::vector<std::vector<RunRecord>> grid;
        for (auto& [seed, list] : by_seed) {
            std::sort(list.begin(), list.end(),
                      [](const auto* a, const auto* b) { return a->record.n_particles < b->record.n_particles; });
            std::vector<RunRecord> row;
            for (const auto* r : list) row.push_back(r->record);
            grid.push_back(std::move(row));
        }
        const RateTable table = rate_study(grid, pde, floor);

        std::vector<std::string> header{"n", "seeds_used", "median_sup_w2", "err_sqrt_log_n"};
        for (std::size_t s = 0; s < table.rows.front().per_seed.size(); ++s) header.push_back(fmt::format("seed_{}", s));
        io::Csv csv(header);
        const auto scaled = table.log_scaled();
        for (std::size_t k = 0; k < table.rows.size(); ++k) {
            const auto& r = table.rows[k];
            std::vector<std::string> cells{std::to_string(r.n), std::to_string(r.seeds_used), io::num(r.median_sup_w2),
                                           io::num(scaled[k])};
            for (double v : r.per_seed) cells.push_back(io::num(v));
            csv.row(cells);
        }
        io::write_file(out / "rate_table.csv", csv.str());

        report["rate"] = {{"floor", floor},
                          {"slope_vs_inv_sqrt_log_n", table.slope_vs_inv_sqrt_log_n},
                          {"slope_vs_inv_sqrt_n", table.slope_vs_inv_sqrt_n},
                          {"err_sqrt_log_n", scaled}};
        if (table.rows.size() >= 2) {
            verdicts.push_back({"rate_decreasing", table.strictly_decreasing(),
                                "median sup_t W2 strictly decreasing in N"});
            verdicts.push_back({"rate_log_bound", scaled.back() <= scaled.front(),
                                fmt::format("err*sqrt(log N): {:.4g} at N={} vs {:.4g} at N={}", scaled.front(),
                                            table.rows.front().n, scaled.back(), table.rows.back().n)});
            if (zero_drift) {
                const double s = table.slope_vs_inv_sqrt_n;
                verdicts.push_back({"rate_slope_band", s >= 0.2 && s <= 0.7,
                                    fmt::format("slope vs log(1/sqrt N) = {:.3f} (band [0.2, 0.7])", s)});
            }
        } else {
            verdicts.push_back({"particle_pde_w2", std::isfinite(table.rows.front().median_sup_w2),
                                fmt::format("median sup_t W2 = {:.4g}", table.rows.front().median_sup_w2)});
        }
    }

    // BV and Hoelder
    if (!runs.empty()) {
        io::Csv csv({"n", "seed", "mean_ktv", "max_ktv", "holder_1_8", "holder_1_4", "holder_1_2"});
        std::map<std::size_t, std::pair<double, double>> sums;
        std::map<std::size_t, std::size_t> counts;
        bool finite = true;
        for (const auto& r : runs) {
            std::vector<std::string> cells{std::to_string(r.record.n_particles), std::to_string(r.record.seed),
                                           io::num(r.mean_ktv), io::num(r.max_ktv)};
            for (std::size_t b = 0; b < 3; ++b) {
                const double v = b < r.holder.size() ? r.holder[b].second : std::nan("");
                finite = finite && (b >= r.holder.size() || std::isfinite(v));
                cells.push_back(io::num(v));
            }
            csv.row(cells);
            auto& s = sums[r.record.n_particles];
            s.first += r.mean_ktv;
            s.second += r.max_ktv;
            ++counts[r.record.n_particles];
        }
        io::write_file(out / "bv_report.csv", csv.str());
        verdicts.push_back({"holder_finite", finite, "dyadic Hoelder quotients finite"});
        if (sums.size() >= 2) {
            double lo_mean = INFINITY, hi_mean = 0, lo_max = INFINITY, hi_max = 0;
            json per_n = json::array();
            for (const auto& [n, s] : sums) {
                const double m = s.first / static_cast<double>(counts[n]);
                const double x = s.second / static_cast<double>(counts[n]);
                per_n.push_back({{"n", n}, {"mean_ktv", m}, {"max_ktv", x}});
                lo_mean = std::min(lo_mean, m);
                hi_mean = std::max(hi_mean, m);
                lo_max = std::min(lo_max, x);
                hi_max = std::max(hi_max, x);
            }
            report["bv"] = per_n;
            verdicts.push_back({"bv_uniform_mean", hi_mean <= 2.0 * lo_mean,
                                fmt::format("mean |k|_T spread {:.3f}x (bound 2x)", hi_mean / lo_mean)});
            verdicts.push_back({"bv_uniform_max", hi_max <= 3.0 * lo_max,
                                fmt::format("max |k|_T spread {:.3f}x (bound 3x)", hi_max / lo_max)});
        }
    }

    // contraction curves written by the contraction scenario
    const auto curves = detail::find_files(in.runs, "contraction_curve_");
    if (!curves.empty()) {
        io::Csv csv({"case", "c", "steps", "final_ratio", "monotone_violations", "bound_violations", "passed"});
        for (const auto& f : curves) {
            const std::string name = f.stem().string().substr(std::string("contraction_curve_").size());
            const auto tab = io::read_csv(f);
            const auto d = tab.numbers("distance");
            const auto bound = tab.numbers("bound");
            const double c = tab.rows.empty() ? 0.0 : tab.number(0, "c");
            std::size_t mono = 0, over = 0;
            for (std::size_t k = 1; k < d.size(); ++k) {
                if (d[k] > d[k - 1] * (1.0 + kContractionRoundoff)) ++mono;
                if (d[k] > bound[k] * (1.0 + kContractionRoundoff)) ++over;
            }
            const bool zero = name == "zero";
            const bool ok = over == 0 && (!zero || mono == 0);
            csv.row(name, c, d.empty() ? std::size_t{0} : d.size() - 1, d.front() > 0 ? d.back() / d.front() : 0.0,
                    mono, over, ok);
            verdicts.push_back({"contraction_" + name, ok,
                                fmt::format("{} bound violations, {} monotonicity violations{}", over, mono,
                                            zero ? "" : " (not required)")});
        }
        io::write_file(out / "contraction.csv", csv.str());
    }

    // duality table written by the duality scenario
    for (const auto& f : detail::find_files(in.runs, "duality")) {
        const auto tab = io::read_csv(f);
        for (std::size_t k = 0; k < tab.rows.size(); ++k) {
            const auto& row = tab.rows[k];
            const double diff = tab.number(k, "abs_diff");
            const double se = tab.number(k, "mc_se");
            verdicts.push_back({"duality_" + row[tab.column("drift")] + "_" + row[tab.column("psi")], diff <= 3.0 * se,
                                fmt::format("|MC - PDE| = {:.3e}, 3 SE = {:.3e}", diff, 3.0 * se)});
        }
    }

    report["verdicts"] = to_json(verdicts);
    report["all_passed"] = std::all_of(verdicts.begin(), verdicts.end(), [](const auto& v) { return v.passed; });
    io::write_json(out / in.report.filename(), report);
    return report;
}

// --- report -------------------------------------------------------------------------------

/// Prints a verdict table for an analyzer directory and returns the exit code
/// (0 iff every check passes). Checks on rate_table.csv and contraction.csv are
/// recomputed from the tables themselves.
inline int emit_report(const fs::path& dir, std::ostream& os) {
    const bool has_report = fs::exists(dir / "report.json");
    const bool has_rate = fs::exists(dir / "rate_table.csv");
    const bool has_bv = fs::exists(dir / "bv_report.csv");
    const bool has_contraction = fs::exists(dir / "contraction.csv");
    if (!has_report && !has_rate && !has_bv && !has_contraction)
        throw std::runtime_error("no analyzer outputs in '" + dir.string() + "'");

    std::vector<Verdict> vs;
    if (has_report) {
        const json r = io::read_json(dir / "report.json");
        for (const auto& v : r.value("verdicts", json::array()))
            vs.push_back({v.at("name").get<std::string>(), v.at("passed").get<bool>(), v.value("detail", "")});
    }
    if (has_rate) {
        const auto med = io::read_csv(dir / "rate_table.csv").numbers("median_sup_w2");
        std::size_t bad = 0;
        for (std::size_t k = 1; k < med.size(); ++k)
            if (!(med[k] < med[k - 1])) ++bad;
        vs.push_back({"rate_table_decreasing", bad == 0,
                      bad == 0 ? "medians strictly decreasing" : fmt::format("{} inversion(s) in rate_table.csv", bad)});
    }
    if (has_contraction) {
        const auto tab = io::read_csv(dir / "contraction.csv");
        for (std::size_t k = 0; k < tab.rows.size(); ++k) {
            const bool zero = tab.rows[k][tab.column("case")] == "zero";
            const bool ok = tab.number(k, "bound_violations") == 0.0 &&
                            (!zero || tab.number(k, "monotone_violations") == 0.0);
            vs.push_back({"contraction_table_" + tab.rows[k][tab.column("case")], ok, "recomputed from contraction.csv"});
        }
    }

    std::size_t width = 10;
    for (const auto& v : vs) width = std::max(width, v.name.size());
    os << fmt::format("{:<{}}  {:<6}  {}\n", "check", width, "result", "detail");
    bool all = true;
    for (const auto& v : vs) {
        os << fmt::format("{:<{}}  {:<6}  {}\n", v.name, width, v.passed ? "PASS" : "FAIL", v.detail);
        all = all && v.passed;
    }
    os << fmt::format("{} check(s), {}\n", vs.size(), all ? "all passed" : "FAILURES");
    return all ? 0 : 1;
}

// --- scenarios ------------------------------------------------------------------------------

inline const std::vector<std::string>& scenario_names() {
    static const std::vector<std::string> names{"prototype", "battery", "rate_sweep", "duality", "contraction"};
    return names;
}

/// Default knobs per scenario; overrides may replace any of these keys.
inline json scenario_defaults(const std::string& name) {
    json p = {{"seed", 1}, {"seeds", 1}, {"dt", 1e-3}, {"cells", 400}, {"pde_dt", 1e-4}, {"snapshots", 20}};
    if (name == "prototype") {
        p["n"] = {10000};
        p["dt"] = 1e-4;
        p["problem"] = prototype_config();
    } else if (name == "battery") {
        p["n"] = {10000};
        p["problem"] = battery_config();
    } else if (name == "rate_sweep") {
        p["n"] = {100, 400, 1600, 6400};
        p["seeds"] = 10;
        p["dt"] = 1e-4;
        p["problem"] = prototype_config();
    } else if (name == "duality") {
        p["n"] = {100000};
        p["dt"] = 1e-4;
        p["problem"] = prototype_config();
        p["problem"]["initial"] = {{"kind", "kumaraswamy"}, {"params", {{"a", 1.0}, {"b", 7.0 / 3.0}}}};
    } else if (name == "contraction") {
        p["n"] = {1000};
        p["problem"] = battery_config();
    } else {
        throw ConfigError("unknown scenario '" + name + "'");
    }
    return p;
}

inline json apply_overrides(const std::string& name, const json& overrides) {
    json p = scenario_defaults(name);
    for (const auto& [key, value] : overrides.items()) {
        if (!p.contains(key)) throw ConfigError("invalid override '" + key + "' for scenario '" + name + "'");
        p[key] = value;
    }
    if (p.at("n").is_number()) p["n"] = json::array({p.at("n")});
    const auto ns = p.at("n").get<std::vector<std::size_t>>();
    if (ns.empty()) throw ConfigError("override 'n' must be nonempty");
    for (std::size_t k = 1; k < ns.size(); ++k)
        if (!(ns[k] > ns[k - 1])) throw ConfigError("override 'n' must be strictly increasing");
    if (p.at("seeds").get<int>() < 1) throw ConfigError("override 'seeds' must be >= 1");
    if (!(p.at("dt").get<double>() > 0.0) || !(p.at("pde_dt").get<double>() > 0.0))
        throw ConfigError("time steps must be positive");
    if (p.at("cells").get<int>() < 6) throw ConfigError("override 'cells' must be >= 6");
    if (p.at("snapshots").get<int>() < 1) throw ConfigError("override 'snapshots' must be >= 1");
    p["problem"] = problem_from_json(p.at("problem")).resolved;
    return p;
}

struct ScenarioResult {
    fs::path dir;
    json manifest;
    json report;
};

namespace detail {

inline void require_valid(const ProblemSpec& spec) {
    const auto rep = validate_conditions(spec);
    std::string failed;
    for (const auto& v : rep.verdicts)
        if (!v.passed) failed += (failed.empty() ? "" : "; ") + v.name + (v.witness.empty() ? "" : ": " + v.witness);
    if (!failed.empty()) throw ConfigError("scenario problem fails validation: " + failed);
}

inline ProblemSpec with_drift(const json& problem, const json& drift) {
    json j = problem;
    j["drift"] = drift;
    j.erase("lipschitz_c");
    return problem_from_json(j).spec;
}

struct Counters {
    std::size_t steps = 0;
};

inline void particle_runs(const fs::path& out, const json& p, const ProblemSpec& spec, const std::vector<double>& times,
                          Counters& count) {
    const auto ns = p.at("n").get<std::vector<std::size_t>>();
    const auto seed0 = p.at("seed").get<std::uint64_t>();
    const int seeds = p.at("seeds").get<int>();
    const double dt = p.at("dt").get<double>();
    const int threads = resolve_threads(0);
    for (int s = 0; s < seeds; ++s) {
        const std::uint64_t seed = seed0 + static_cast<std::uint64_t>(s);
        const auto recs = simulate_coupled(spec, ns, dt, seed, times);
        for (const auto& r : recs) {
            io::write_run(out / "runs" / fmt::format("seed_{}", seed) / fmt::format("n{}", r.n_particles), r,
                          p.at("problem"), dt, true, threads);
            count.steps += r.total_steps;
        }
    }
}

inline void pde_runs(const fs::path& out, const json& p, const ProblemSpec& spec, const std::vector<double>& times) {
    const auto cells = p.at("cells").get<std::size_t>();
    const double pde_dt = p.at("pde_dt").get<double>();
    io::write_fpe(out / "pde", solve_fpe(spec, cells, pde_dt, times), p.at("problem"), cells, pde_dt, {}, times);
    io::write_fpe(out / "pde_ref", solve_fpe(spec, cells / 2, 2.0 * pde_dt, times), p.at("problem"), cells / 2,
                  2.0 * pde_dt, {}, times);
}

inline void duality(const fs::path& out, const json& p, Counters& count) {
    const json problem = p.at("problem");
    const ProblemSpec base = problem_from_json(problem).spec;
    const auto n = p.at("n").get<std::vector<std::size_t>>().back();
    const auto seed = p.at("seed").get<std::uint64_t>();
    const double dt = p.at("dt").get<double>();
    const auto cells = p.at("cells").get<std::size_t>();
    const double pde_dt = p.at("pde_dt").get<double>();
    const double T = base.horizon;

    struct Psi {
        const char* name;
        double (*f)(double);
    };
    const Psi psis[] = {{"x", [](double x) { return x; }},
                        {"x2", [](double x) { return x * x; }},
                        {"cos_pi_x", [](double x) { return std::cos(std::numbers::pi * x); }}};
    const std::pair<const char*, json> drifts[] = {
        {"zero", "zero"}, {"linear", {{"preset", "double_well_log"}, {"theta", 0.0}, {"a", 1.0}}}};

    io::Csv csv({"drift", "psi", "mc_mean", "mc_se", "pde", "abs_diff", "passed"});
    for (const auto& [dname, drift] : drifts) {
        const ProblemSpec spec = with_drift(problem, drift);
        require_valid(spec);
        SimOptions o;
        o.keep_positions = false;
        const auto rec = simulate_no_interaction(spec, n, dt, seed, {T}, o);
        count.steps += rec.total_steps;
        const auto masses = law_cell_masses(spec.initial, cells);
        const auto pde = solve_neumann_fpe(spec.drift.mu_eps, spec.sigma, cells, pde_dt, masses, {T}, T);
        io::write_fpe(out / fmt::format("pde_{}", dname), pde, problem, cells, pde_dt, {true, false, 1.0}, {T});
        const auto& xs = rec.marginals.back();
        for (const auto& psi : psis) {
            rmv::detail::CompensatedSum s1, s2;
            for (double x : xs) {
                const double v = psi.f(x);
                s1.add(v);
                s2.add(v * v);
            }
            const double nn = static_cast<double>(xs.size());
            const double mean = s1.value() / nn;
            const double var = std::max(0.0, s2.value() / nn - mean * mean) * nn / (nn - 1.0);
            const double se = std::sqrt(var / nn);
            const double ref = integrate_against(pde.snapshots.back(), psi.f);
            const double diff = std::abs(mean - ref);
            csv.row(std::string(dname), std::string(psi.name), mean, se, ref, diff, diff <= 3.0 * se);
        }
    }
    io::write_file(out / "duality.csv", csv.str());
}

inline void contraction(const fs::path& out, const json& p, Counters& count) {
    const auto n = p.at("n").get<std::vector<std::size_t>>().back();
    const auto seed = p.at("seed").get<std::uint64_t>();
    const double dt = p.at("dt").get<double>();
    const json problem = p.at("problem");
    const std::pair<const char*, json> cases[] = {{"zero", "zero"}, {"drift", problem.at("drift")}};
    for (const auto& [cname, drift] : cases) {
        const ProblemSpec spec = with_drift(problem, drift);
        require_valid(spec);
        // Two independent draws of the same law: distinct feasible starts with equal mean.
        const auto a = initial_positions(spec, n, seed);
        const auto b = initial_positions(spec, n, seed + 1000003);
        const auto res = contraction_test(spec, dt, seed, a, b);
        count.steps += 2 * (res.times.size() - 1);
        io::Csv csv({"t", "distance", "bound", "c"});
        for (std::size_t k = 0; k < res.times.size(); ++k)
            csv.row(res.times[k], res.curve[k],
                    std::exp(2.0 * res.slack * res.c * res.times[k]) * res.curve.front(), res.c);
        io::write_file(out / fmt::format("contraction_curve_{}.csv", cname), csv.str());
    }
}

}  // namespace detail

inline json input_identity(const std::string& name, const json& params) {
    return {{"scenario", name}, {"params", params}};
}

/// Runs a scenario into `out` and writes manifest.json there.
inline ScenarioResult run_scenario(const std::string& name, const json& overrides, const fs::path& out) {
    const auto t0 = std::chrono::steady_clock::now();
    const json p = apply_overrides(name, overrides);
    const ProblemSpec spec = problem_from_json(p.at("problem")).spec;
    detail::require_valid(spec);
    fs::create_directories(out);

    detail::Counters count;
    AnalyzeInputs ai;
    ai.runs = {out};
    ai.report = out / "report.json";
    const auto times = uniform_times(spec.horizon, p.at("snapshots").get<std::size_t>());
    if (name == "prototype" || name == "battery" || name == "rate_sweep") {
        detail::particle_runs(out, p, spec, times, count);
        detail::pde_runs(out, p, spec, times);
        ai.pde = out / "pde";
        ai.pde_ref = out / "pde_ref";
    } else if (name == "duality") {
        detail::duality(out, p, count);
    } else {
        detail::contraction(out, p, count);
    }
    ScenarioResult res;
    res.dir = out;
    res.report = analyze(ai);

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::vector<std::uint64_t> seeds;
    for (int s = 0; s < p.at("seeds").get<int>(); ++s) seeds.push_back(p.at("seed").get<std::uint64_t>() + s);
    const json id = input_identity(name, p);
    res.manifest = {{"scenario", name},
                    {"params", p},
                    {"input_hash", io::git_hash(id.dump())},
                    {"seeds", seeds},
                    {"versions", io::versions()},
                    {"threads", resolve_threads(0)},
                    {"total_steps", count.steps},
                    {"wall_clock_seconds", wall},
                    {"outputs", io::csv_hashes(out)}};
    io::write_json(out / "manifest.json", res.manifest);
    return res;
}

/// Re-runs the scenario recorded in a manifest.
inline ScenarioResult rerun_manifest(const fs::path& manifest, const fs::path& out) {
    const json m = io::read_json(manifest);
    const std::string name = m.at("scenario").get<std::string>();
    const json p = m.at("params");
    if (io::git_hash(input_identity(name, p).dump()) != m.value("input_hash", ""))
        throw ConfigError("manifest '" + manifest.string() + "': input hash does not match its parameters");
    return run_scenario(name, p, out);
}

}  // namespace rmv::exp
