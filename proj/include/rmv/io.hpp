#pragma once

// Run directories on disk: CSV and JSON writers/readers, git-style content hashes.
//
// CSV: one header line, ',' separator, '.' decimal, LF endings, numbers as
// "%.17g" so a value round-trips exactly.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/core.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "rmv/fokker_planck.hpp"
#include "rmv/metrics.hpp"
#include "rmv/particles.hpp"

namespace rmv::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline std::string num(double v) { return fmt::format("{:.17g}", v); }

/// File-name tag of a snapshot time.
inline std::string time_tag(double t) { return fmt::format("{:.6f}", t); }

class Csv {
public:
    explicit Csv(std::vector<std::string> header) : width_{header.size()} { line(header); }

    template <typename... Cells>
    void row(const Cells&... cells) {
        static_assert(sizeof...(Cells) > 0);
        std::vector<std::string> v{cell(cells)...};
        if (v.size() != width_) throw std::logic_error("csv: row width differs from header");
        line(v);
    }
    void row(const std::vector<std::string>& cells) {
        if (cells.size() != width_) throw std::logic_error("csv: row width differs from header");
        line(cells);
    }

    const std::string& str() const noexcept { return buf_; }

private:
    static std::string cell(double v) { return num(v); }
    static std::string cell(std::size_t v) { return std::to_string(v); }
    static std::string cell(int v) { return std::to_string(v); }
    static std::string cell(bool v) { return v ? "1" : "0"; }
    static std::string cell(const std::string& v) { return v; }
    static std::string cell(const char* v) { return v; }

    void line(const std::vector<std::string>& cells) {
        for (std::size_t k = 0; k < cells.size(); ++k) {
            if (k) buf_ += ',';
            buf_ += cells[k];
        }
        buf_ += '\n';
    }

    std::size_t width_;
    std::string buf_;
};

/// Writes through a sibling temp file and renames, so readers never see a partial file.
inline void write_file(const fs::path& path, std::string_view content) {
    fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".part";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

inline void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read '" + path.string() + "'");
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline json read_json(const fs::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed JSON in '" + path.string() + "': " + e.what());
    }
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw std::runtime_error("csv: missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    }
    double number(std::size_t row, const std::string& name) const { return std::stod(rows.at(row).at(column(name))); }
    std::vector<double> numbers(const std::string& name) const {
        const std::size_t c = column(name);
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(std::stod(r.at(c)));
        return out;
    }
};

inline Table read_csv(const fs::path& path) {
    std::istringstream in(read_file(path));
    Table t;
    std::string line;
    auto split = [](const std::string& l) {
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = l.find(',', start);
            cells.push_back(l.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        return cells;
    };
    if (!std::getline(in, line)) throw std::runtime_error("csv: '" + path.string() + "' is empty");
    t.header = split(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = split(line);
        if (cells.size() != t.header.size())
            throw std::runtime_error("csv: ragged row in '" + path.string() + "'");
        t.rows.push_back(std::move(cells));
    }
    return t;
}

/// Git blob id: sha1("blob <size>\0" + content).
inline std::string git_hash(std::string_view content) {
    const std::string head = "blob " + std::to_string(content.size()) + std::string(1, '\0');
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx) throw std::runtime_error("EVP_MD_CTX_new failed");
    const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                    EVP_DigestUpdate(ctx, head.data(), head.size()) == 1 &&
                    EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                    EVP_DigestFinal_ex(ctx, md, &len) == 1;
    EVP_MD_CTX_free(ctx);
    if (!ok) throw std::runtime_error("sha1 digest failed");
    std::string hex;
    for (unsigned int k = 0; k < len; ++k) hex += fmt::format("{:02x}", md[k]);
    return hex;
}

/// Hash of every CSV under dir, keyed by relative path (sorted).
inline json csv_hashes(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    json out = json::object();
    for (const auto& f : files) out[fs::relative(f, dir).generic_string()] = git_hash(read_file(f));
    return out;
}

inline std::string version_string() { return "0.1.0"; }

inline json versions() {
    return {{"rmv", version_string()},
            {"nlohmann_json", fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR, NLOHMANN_JSON_VERSION_MINOR,
                                          NLOHMANN_JSON_VERSION_PATCH)},
            {"fmt", std::to_string(FMT_VERSION)},
            {"compiler", __VERSION__}};
}

// --- particle runs ------------------------------------------------------------------------

inline void write_run(const fs::path& dir, const RunRecord& rec, const json& resolved_config, double dt,
                      bool interaction, int threads) {
    for (std::size_t k = 0; k < rec.snapshot_times.size(); ++k) {
        Csv c({"x"});
        for (double v : rec.marginals[k]) c.row(v);
        write_file(dir / ("marginals_" + time_tag(rec.snapshot_times[k]) + ".csv"), c.str());
    }
    Csv d({"time", "K", "mean_abs_k", "max_abs_k", "constraint_residual"});
    for (std::size_t k = 0; k < rec.snapshot_times.size(); ++k)
        d.row(rec.snapshot_times[k], rec.K_path[k], rec.k_tv_summary[k].first, rec.k_tv_summary[k].second,
              rec.snapshot_residuals[k]);
    write_file(dir / "diagnostics.csv", d.str());

    if (rec.snapshot_times.size() >= 2) {
        const auto bv = bv_holder_report(rec);
        std::vector<std::string> header{"beta", "max_quotient"};
        for (std::size_t l = 0; l < bv.holder.front().per_level.size(); ++l) header.push_back(fmt::format("gap_{}", 1u << l));
        Csv h(header);
        for (const auto& row : bv.holder) {
            std::vector<std::string> cells{num(row.beta), num(row.max_quotient)};
            for (double v : row.per_level) cells.push_back(num(v));
            cells.resize(header.size(), "");
            h.row(cells);
        }
        write_file(dir / "bv_holder.csv", h.str());
    }

    json adjusted = json::array();
    for (const auto& s : rec.segments) adjusted.push_back({{"t0", s.t0}, {"t1", s.t1}, {"steps", s.steps}, {"dt", s.dt}});
    write_json(dir / "run_meta.json", {{"kind", "simulate"},
                                       {"n", rec.n_particles},
                                       {"seed", rec.seed},
                                       {"dt", dt},
                                       {"adjusted_dt", adjusted},
                                       {"total_steps", rec.total_steps},
                                       {"snapshot_times", rec.snapshot_times},
                                       {"interaction", interaction},
                                       {"max_constraint_residual", rec.max_residual()},
                                       {"threads", threads},
                                       {"config", resolved_config},
                                       {"versions", versions()}});
}

/// Reads back what the analyzer needs: sorted marginals and the BV summary.
struct LoadedRun {
    fs::path dir;
    RunRecord record;
    double mean_ktv = 0.0;
    double max_ktv = 0.0;
    double max_residual = 0.0;
    bool interaction = true;
    std::vector<std::pair<double, double>> holder;  // (beta, max quotient)
};

inline LoadedRun read_run(const fs::path& dir) {
    const json meta = read_json(dir / "run_meta.json");
    if (meta.value("kind", "") != "simulate") throw std::runtime_error("'" + dir.string() + "' is not a simulate run");
    LoadedRun r;
    r.dir = dir;
    r.record.n_particles = meta.at("n").get<std::size_t>();
    r.record.seed = meta.at("seed").get<std::uint64_t>();
    r.record.snapshot_times = meta.at("snapshot_times").get<std::vector<double>>();
    r.interaction = meta.value("interaction", true);
    for (double t : r.record.snapshot_times) {
        const auto tab = read_csv(dir / ("marginals_" + time_tag(t) + ".csv"));
        r.record.marginals.push_back(tab.numbers("x"));
    }
    const auto diag = read_csv(dir / "diagnostics.csv");
    if (!diag.rows.empty()) {
        r.mean_ktv = diag.number(diag.rows.size() - 1, "mean_abs_k");
        r.max_ktv = diag.number(diag.rows.size() - 1, "max_abs_k");
        for (double v : diag.numbers("constraint_residual")) r.max_residual = std::max(r.max_residual, v);
    }
    if (fs::exists(dir / "bv_holder.csv")) {
        const auto h = read_csv(dir / "bv_holder.csv");
        for (std::size_t k = 0; k < h.rows.size(); ++k)
            r.holder.emplace_back(h.number(k, "beta"), h.number(k, "max_quotient"));
    }
    return r;
}

// --- density runs --------------------------------------------------------------------------

inline void write_fpe(const fs::path& dir, const FpeRun& run, const json& resolved_config, std::size_t cells,
                      double dt, const FpeOptions& opts, const std::vector<double>& snapshot_times) {
    for (const auto& g : run.snapshots) {
        Csv c({"x_center", "u"});
        for (std::size_t j = 0; j < g.cells(); ++j) c.row(g.center(j), g.u[j]);
        write_file(dir / ("density_" + time_tag(g.t) + ".csv"), c.str());
    }
    Csv d({"t", "mass", "moment", "Kdot", "residual"});
    for (const auto& r : run.diagnostics) d.row(r.t, r.mass, r.moment, r.Kdot, r.residual);
    write_file(dir / "fpe_diagnostics.csv", d.str());
    write_json(dir / "run_meta.json", {{"kind", "fpe"},
                                       {"cells", cells},
                                       {"dt", dt},
                                       {"neumann", opts.neumann},
                                       {"moment_correct", opts.moment_correct},
                                       {"snapshot_times", snapshot_times},
                                       {"max_moment_residual", run.max_moment_residual()},
                                       {"max_mass_drift", run.max_mass_drift()},
                                       {"config", resolved_config},
                                       {"versions", versions()}});
}

inline FpeRun read_fpe(const fs::path& dir) {
    const json meta = read_json(dir / "run_meta.json");
    if (meta.value("kind", "") != "fpe") throw std::runtime_error("'" + dir.string() + "' is not an fpe run");
    FpeRun run;
    for (double t : meta.at("snapshot_times").get<std::vector<double>>()) {
        const auto tab = read_csv(dir / ("density_" + time_tag(t) + ".csv"));
        DensityGrid g;
        g.u = tab.numbers("u");
        g.t = t;
        run.snapshots.push_back(std::move(g));
    }
    const auto diag = read_csv(dir / "fpe_diagnostics.csv");
    for (std::size_t k = 0; k < diag.rows.size(); ++k)
        run.diagnostics.push_back({diag.number(k, "t"), diag.number(k, "mass"), diag.number(k, "moment"),
                                   diag.number(k, "Kdot"), diag.number(k, "residual")});
    return run;
}

}  // namespace rmv::io
