#pragma once

// JSON problem files.
//
//   {
//     "drift": "zero" | "double_well_log" | {"preset": "double_well_log", "theta": 0.2, "a": 1.0}
//              | {"tabulated": {"x": [...], "mu": [...]}},
//     "rho": 0.25, "lipschitz_c": 0.0,           (optional)
//     "epsilon": 0.05, "sigma": 1.0, "horizon": 1.0,
//     "mean_schedule": {"breakpoints": [0, 1], "values": [0.3, 0.7], "xi": 0.25},
//     "initial": {"kind": "uniform" | "kumaraswamy" | "samples", "params": {...}, "seed": 7}
//   }

#include <fstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "rmv/model.hpp"

namespace rmv {

using json = nlohmann::json;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline DriftModel drift_from_json(const json& j, double epsilon, double rho, const json& c_override) {
    std::string preset;
    json params = json::object();
    if (j.is_string()) {
        preset = j.get<std::string>();
    } else if (j.is_object() && j.contains("preset")) {
        preset = j.at("preset").get<std::string>();
        params = j;
    } else if (j.is_object() && j.contains("tabulated")) {
        const auto& t = j.at("tabulated");
        auto xs = t.at("x").get<std::vector<double>>();
        auto mus = t.at("mu").get<std::vector<double>>();
        if (xs.front() > epsilon || xs.back() < 1.0 - epsilon)
            throw ConfigError("tabulated drift must cover [epsilon, 1-epsilon]");
        ScalarFunction f = tabulated_drift(xs, mus);
        double c = 0.0;
        for (std::size_t k = 1; k < xs.size(); ++k) c = std::max(c, -(mus[k] - mus[k - 1]) / (xs[k] - xs[k - 1]));
        if (!c_override.is_null()) c = c_override.get<double>();
        return DriftModel::make("tabulated", std::move(f), c, rho, epsilon);
    } else {
        throw ConfigError("drift: expected a preset name, {preset: ...}, or {tabulated: ...}");
    }

    if (preset == "zero") {
        return DriftModel::make("zero", zero_drift(), c_override.is_null() ? 0.0 : c_override.get<double>(), rho,
                                epsilon);
    }
    if (preset == "double_well_log") {
        const double theta = params.value("theta", 0.2);
        const double a = params.value("a", 1.0);
        if (theta < 0.0) throw ConfigError("double_well_log: theta must be nonnegative");
        // mu' = theta/(x(1-x)) + a >= 4 theta + a
        const double c = c_override.is_null() ? std::max(0.0, -(4.0 * theta + a)) : c_override.get<double>();
        return DriftModel::make("double_well_log", double_well_log(theta, a), c, rho, epsilon);
    }
    throw ConfigError("unknown drift preset '" + preset + "'");
}

inline InitialLaw law_from_json(const json& j) {
    const std::string kind = j.value("kind", "uniform");
    const json params = j.value("params", json::object());
    if (kind == "uniform") return UniformLaw{};
    if (kind == "kumaraswamy" || kind == "beta")
        return KumaraswamyLaw{params.value("a", 1.0), params.value("b", 1.0)};
    if (kind == "samples") return SampleListLaw{params.at("samples").get<std::vector<double>>()};
    throw ConfigError("unknown initial law kind '" + kind + "'");
}

}  // namespace detail

/// Keeps the source JSON so resolved configs can be written back out.
struct LoadedProblem {
    ProblemSpec spec;
    json resolved;
};

inline LoadedProblem problem_from_json(const json& in) {
    try {
        json j = in;
        j["epsilon"] = j.value("epsilon", 0.05);
        j["rho"] = j.value("rho", 0.25);
        j["sigma"] = j.value("sigma", 1.0);
        j["horizon"] = j.value("horizon", 1.0);
        if (!j.contains("drift")) j["drift"] = "zero";
        if (!j.contains("mean_schedule")) j["mean_schedule"] = {{"breakpoints", {0.0}}, {"values", {0.5}}, {"xi", 0.25}};
        if (!j.contains("initial")) j["initial"] = {{"kind", "uniform"}};

        const double eps = j.at("epsilon").get<double>();
        const double rho = j.at("rho").get<double>();
        if (!(rho > 0.0 && rho < 0.5)) throw ConfigError("rho must lie in (0, 1/2)");
        if (!(eps > 0.0 && eps < 0.5)) throw ConfigError("epsilon must lie in (0, 1/2)");

        ProblemSpec spec;
        spec.drift = detail::drift_from_json(j.at("drift"), eps, rho, j.value("lipschitz_c", json()));
        const auto& ms = j.at("mean_schedule");
        spec.mean = MeanSchedule(ms.at("breakpoints").get<std::vector<double>>(),
                                 ms.at("values").get<std::vector<double>>(), ms.value("xi", 0.25));
        spec.sigma = j.at("sigma").get<double>();
        spec.horizon = j.at("horizon").get<double>();
        spec.initial = detail::law_from_json(j.at("initial"));
        if (j.at("initial").contains("seed")) spec.initial_seed = j.at("initial").at("seed").get<std::uint64_t>();
        spec.check();
        return {std::move(spec), std::move(j)};
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const std::domain_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

inline LoadedProblem load_problem(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config '" + path + "': " + e.what());
    }
    return problem_from_json(j);
}

// --- shipped scenario problems ----------------------------------------------------------------

/// mu = 0, sigma = 1, q = 1/2, uniform start.
inline json prototype_config() {
    return {{"drift", "zero"},
            {"epsilon", 0.05},
            {"sigma", 1.0},
            {"horizon", 1.0},
            {"mean_schedule", {{"breakpoints", {0.0}}, {"values", {0.5}}, {"xi", 0.25}}},
            {"initial", {{"kind", "uniform"}}}};
}

/// Double-well-log drift with a charge ramp 0.3 -> 0.7 over [0,1], then hold.
/// Parameter values are illustrative, not taken from any measured cell.
inline json battery_config() {
    return {{"drift", {{"preset", "double_well_log"}, {"theta", 0.2}, {"a", 1.0}}},
            {"epsilon", 0.05},
            {"rho", 0.25},
            {"sigma", 0.5},
            {"horizon", 1.5},
            {"mean_schedule", {{"breakpoints", {0.0, 1.0}}, {"values", {0.3, 0.7}}, {"xi", 0.25}}},
            {"initial", {{"kind", "kumaraswamy"}, {"params", {{"a", 1.0}, {"b", 7.0 / 3.0}}}}}};
}

}  // namespace rmv
