// rmv: particle simulation, Fokker-Planck solves, analysis and scenarios.

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "rmv/config.hpp"
#include "rmv/experiments.hpp"
#include "rmv/io.hpp"

namespace {

namespace fs = std::filesystem;
using rmv::json;

template <typename T>
std::vector<T> parse_list(const std::string& s, const char* what) {
    std::vector<T> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            if constexpr (std::is_floating_point_v<T>)
                out.push_back(static_cast<T>(std::stod(item, &used)));
            else
                out.push_back(static_cast<T>(std::stoull(item, &used)));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw rmv::ConfigError(fmt::format("{}: cannot parse '{}'", what, item));
        }
    }
    if (out.empty()) throw rmv::ConfigError(fmt::format("{}: empty list", what));
    return out;
}

rmv::LoadedProblem problem_or_default(const std::string& path) {
    return path.empty() ? rmv::problem_from_json(rmv::prototype_config()) : rmv::load_problem(path);
}

std::vector<double> snapshot_times(const std::string& list, double horizon) {
    return list.empty() ? rmv::uniform_times(horizon, 20) : parse_list<double>(list, "--snapshots");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mean-constrained reflected particle systems and their Fokker-Planck limit"};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "Run the projected Euler particle scheme");
    std::string sim_config, sim_snaps, sim_coupled, sim_out = "run";
    std::size_t sim_n = 1000;
    double sim_dt = 1e-3;
    std::uint64_t sim_seed = 1;
    bool sim_free = false;
    sim->add_option("--config", sim_config, "Problem JSON (default: prototype)");
    sim->add_option("--n", sim_n, "Particle count")->check(CLI::PositiveNumber);
    sim->add_option("--dt", sim_dt, "Time step (reduced to divide each snapshot gap)")->check(CLI::PositiveNumber);
    sim->add_option("--seed", sim_seed, "Noise and initial-draw seed");
    sim->add_option("--snapshots", sim_snaps, "Comma-separated snapshot times (default: 21 equispaced)");
    sim->add_option("--coupled", sim_coupled, "Comma-separated increasing N list sharing noise streams");
    sim->add_flag("--no-interaction", sim_free, "Independent reflected diffusions (no mean constraint)");
    sim->add_option("--out", sim_out, "Output directory");

    // fpe
    auto* fpe = app.add_subcommand("fpe", "Solve the Fokker-Planck equation on a uniform grid");
    std::string fpe_config, fpe_snaps, fpe_out = "pde";
    std::size_t fpe_cells = 400;
    double fpe_dt = 1e-4;
    bool fpe_neumann = false, fpe_correct = false;
    fpe->add_option("--config", fpe_config, "Problem JSON (default: prototype)");
    fpe->add_option("--cells", fpe_cells, "Number of cells")->check(CLI::Range(3, 1 << 24));
    fpe->add_option("--dt", fpe_dt, "Time step")->check(CLI::PositiveNumber);
    fpe->add_option("--snapshots", fpe_snaps, "Comma-separated snapshot times (default: 21 equispaced)");
    fpe->add_flag("--neumann", fpe_neumann, "Plain reflected diffusion, Kdot = 0, initial law not recentered");
    fpe->add_flag("--moment-correct", fpe_correct, "Feed the moment error back into Kdot");
    fpe->add_option("--out", fpe_out, "Output directory");

    // analyze
    auto* ana = app.add_subcommand("analyze", "Rate table, BV/Hoelder and contraction summaries");
    std::vector<std::string> ana_runs;
    std::string ana_pde, ana_ref, ana_report = "report.json";
    ana->add_option("--runs", ana_runs, "Run directories (searched recursively)")->required();
    ana->add_option("--pde", ana_pde, "FPE output directory");
    ana->add_option("--pde-ref", ana_ref, "Coarser FPE output used to estimate the discretization floor");
    ana->add_option("--report", ana_report, "Path of report.json; tables go next to it");

    // scenario
    auto* scn = app.add_subcommand("scenario", "Run a named scenario and write a manifest");
    std::string scn_name, scn_out, scn_manifest, scn_config, scn_n;
    std::optional<int> scn_seeds, scn_snapshots;
    std::optional<std::size_t> scn_cells;
    std::optional<std::uint64_t> scn_seed;
    std::optional<double> scn_dt, scn_pde_dt;
    scn->add_option("name", scn_name, "prototype | battery | rate_sweep | duality | contraction");
    scn->add_option("--out", scn_out, "Output directory (default: the scenario name)");
    scn->add_option("--manifest", scn_manifest, "Re-run the scenario recorded in this manifest");
    scn->add_option("--config", scn_config, "Replace the scenario's problem JSON");
    scn->add_option("--n", scn_n, "Comma-separated particle counts");
    scn->add_option("--seeds", scn_seeds, "Number of seeds");
    scn->add_option("--seed", scn_seed, "First seed");
    scn->add_option("--dt", scn_dt, "Particle time step");
    scn->add_option("--cells", scn_cells, "FPE cells");
    scn->add_option("--pde-dt", scn_pde_dt, "FPE time step");
    scn->add_option("--snapshots", scn_snapshots, "Number of snapshot intervals");

    // report
    auto* rep = app.add_subcommand("report", "Summarize an analyzer directory; exit 1 on any failed check");
    std::string rep_dir;
    rep->add_option("dir", rep_dir, "Directory with analyzer outputs")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sim) {
            const auto prob = problem_or_default(sim_config);
            const auto times = snapshot_times(sim_snaps, prob.spec.horizon);
            const int threads = rmv::resolve_threads(0);
            if (!sim_coupled.empty()) {
                if (sim_free) throw rmv::ConfigError("--coupled and --no-interaction are exclusive");
                const auto ns = parse_list<std::size_t>(sim_coupled, "--coupled");
                const auto recs = rmv::simulate_coupled(prob.spec, ns, sim_dt, sim_seed, times);
                for (const auto& r : recs)
                    rmv::io::write_run(fs::path(sim_out) / fmt::format("n{}", r.n_particles), r, prob.resolved, sim_dt,
                                       true, threads);
            } else {
                const auto rec = sim_free ? rmv::simulate_no_interaction(prob.spec, sim_n, sim_dt, sim_seed, times)
                                          : rmv::simulate(prob.spec, sim_n, sim_dt, sim_seed, times);
                rmv::io::write_run(sim_out, rec, prob.resolved, sim_dt, !sim_free, threads);
                std::cout << fmt::format("{} steps, max constraint residual {:.3e}\n", rec.total_steps,
                                         rec.max_residual());
            }
            return 0;
        }
        if (*fpe) {
            const auto prob = problem_or_default(fpe_config);
            const auto times = snapshot_times(fpe_snaps, prob.spec.horizon);
            rmv::FpeOptions opts;
            opts.moment_correct = fpe_correct;
            rmv::FpeRun run;
            if (fpe_neumann) {
                opts.neumann = true;
                const auto masses = rmv::law_cell_masses(prob.spec.initial, fpe_cells);
                run = rmv::solve_neumann_fpe(prob.spec.drift.mu_eps, prob.spec.sigma, fpe_cells, fpe_dt, masses, times,
                                             prob.spec.horizon);
            } else {
                run = rmv::solve_fpe(prob.spec, fpe_cells, fpe_dt, times, opts);
            }
            rmv::io::write_fpe(fpe_out, run, prob.resolved, fpe_cells, fpe_dt, opts, times);
            std::cout << fmt::format("max moment residual {:.3e}, max mass drift {:.3e}\n", run.max_moment_residual(),
                                     run.max_mass_drift());
            return 0;
        }
        if (*ana) {
            rmv::exp::AnalyzeInputs in;
            for (const auto& r : ana_runs) in.runs.emplace_back(r);
            if (!ana_pde.empty()) in.pde = ana_pde;
            if (!ana_ref.empty()) in.pde_ref = ana_ref;
            in.report = ana_report;
            const json r = rmv::exp::analyze(in);
            return r.at("all_passed").get<bool>() ? 0 : 1;
        }
        if (*scn) {
            rmv::exp::ScenarioResult res;
            if (!scn_manifest.empty()) {
                const fs::path out = scn_out.empty() ? fs::path("rerun") : fs::path(scn_out);
                res = rmv::exp::rerun_manifest(scn_manifest, out);
            } else {
                if (scn_name.empty()) throw rmv::ConfigError("scenario: a name or --manifest is required");
                json ov = json::object();
                if (!scn_config.empty()) ov["problem"] = rmv::load_problem(scn_config).resolved;
                if (!scn_n.empty()) ov["n"] = parse_list<std::size_t>(scn_n, "--n");
                if (scn_seeds) ov["seeds"] = *scn_seeds;
                if (scn_seed) ov["seed"] = *scn_seed;
                if (scn_dt) ov["dt"] = *scn_dt;
                if (scn_cells) ov["cells"] = *scn_cells;
                if (scn_pde_dt) ov["pde_dt"] = *scn_pde_dt;
                if (scn_snapshots) ov["snapshots"] = *scn_snapshots;
                res = rmv::exp::run_scenario(scn_name, ov, scn_out.empty() ? fs::path(scn_name) : fs::path(scn_out));
            }
            std::cout << fmt::format("scenario {} -> {} ({:.1f} s)\n", res.manifest.at("scenario").get<std::string>(),
                                     res.dir.string(), res.manifest.at("wall_clock_seconds").get<double>());
            return rmv::exp::emit_report(res.dir, std::cout);
        }
        if (*rep) return rmv::exp::emit_report(rep_dir, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
