#pragma once

// JSON run configuration. Every section is optional; unknown keys are rejected
// and errors name the offending value by JSON pointer.

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowfront/cdekf.hpp"
#include "flowfront/error.hpp"
#include "flowfront/eval.hpp"
#include "flowfront/faults.hpp"
#include "flowfront/mle.hpp"
#include "flowfront/pde_sim.hpp"
#include "flowfront/sde_model.hpp"

namespace flowfront::config {

struct RunConfig {
    pde::GridSpec grid;
    double A = 0.5;
    double c0 = 6.75e-9;
    double porosity = 0.5;
    double thickness = 0.01;
    double density = 1100.0;
    double gravity = 9.81;
    pde::SimulationSettings simulation;
    double noise = 0.0;  // measurement noise added by `simulate`, m
    int n_sensors = 0;   // 0: every grid column
    int order = 4;
    sde::ModelOptions model;
    filter::FilterOptions filter;
    mle::MleOptions mle;
    faults::FaultScenario scenario;
    eval::SweepConfig sweep;
    std::uint64_t seed = 0;

    int sensor_count() const { return n_sensors > 0 ? n_sensors : grid.columns(); }

    pde::MaterialField material() const {
        pde::MaterialField field = pde::build_coefficient_field(grid, A, c0);
        field.porosity = porosity;
        field.thickness = thickness;
        field.density = density;
        field.gravity = gravity;
        return field;
    }

    eval::SweepSetup sweep_setup() const {
        eval::SweepSetup setup;
        setup.material = material();
        setup.simulation = simulation;
        setup.mle = mle;
        setup.filter = filter;
        setup.model = model;
        return setup;
    }
};

namespace detail {

/// Reads members of one JSON object and remembers which keys were consumed.
class Section {
public:
    Section(const nlohmann::json& node, std::string pointer)
        : node_(node), pointer_(std::move(pointer)) {
        if (!node_.is_object()) fail(pointer_.empty() ? "/" : pointer_, "expected an object");
    }

    bool has(const std::string& key) const { return node_.contains(key); }

    std::string path(const std::string& key) const { return pointer_ + "/" + key; }

    template <class T>
    void read(const std::string& key, T& target) {
        seen_.insert(key);
        if (!node_.contains(key)) return;
        target = convert<T>(node_.at(key), path(key));
    }

    const nlohmann::json* child(const std::string& key) {
        seen_.insert(key);
        return node_.contains(key) ? &node_.at(key) : nullptr;
    }

    void finish() const {
        for (auto it = node_.begin(); it != node_.end(); ++it)
            if (!seen_.count(it.key())) fail(path(it.key()), "unknown key");
    }

    [[noreturn]] static void fail(const std::string& where, const std::string& what) {
        throw ConfigError("config " + where + ": " + what);
    }

    template <class T>
    static T convert(const nlohmann::json& value, const std::string& where) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!value.is_boolean()) fail(where, "expected a boolean");
            return value.get<bool>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!value.is_string()) fail(where, "expected a string");
            return value.get<std::string>();
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
            if (!value.is_number_unsigned()) fail(where, "expected a non-negative integer");
            return value.get<std::uint64_t>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!value.is_number_integer()) fail(where, "expected an integer");
            return value.get<T>();
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!value.is_number()) fail(where, "expected a number");
            return value.get<T>();
        } else {
            if (!value.is_array()) fail(where, "expected an array");
            T out;
            for (std::size_t k = 0; k < value.size(); ++k)
                out.push_back(convert<typename T::value_type>(value[k], where + "/" + std::to_string(k)));
            return out;
        }
    }

private:
    const nlohmann::json& node_;
    std::string pointer_;
    std::set<std::string> seen_;
};

inline void require(bool ok, const std::string& where, const std::string& what) {
    if (!ok) Section::fail(where, what);
}

inline faults::FaultScenario read_scenario(Section& s) {
    faults::FaultScenario scenario;
    std::string kind = "none";
    s.read("kind", kind);
    try {
        scenario.kind = faults::parse_kind(kind);
    } catch (const ConfigError&) {
        Section::fail(s.path("kind"), "unknown fault kind '" + kind + "'");
    }
    s.read("sensors", scenario.sensors);
    s.read("fraction", scenario.fraction);
    s.read("bias", scenario.bias);
    s.read("seed", scenario.seed);
    require(scenario.fraction >= 0.0 && scenario.fraction <= 1.0, s.path("fraction"),
            "must lie in [0, 1]");
    for (int idx : scenario.sensors) require(idx >= 0, s.path("sensors"), "indices must be non-negative");
    return scenario;
}

}  // namespace detail

inline RunConfig parse(const nlohmann::json& doc) {
    using detail::require;
    using detail::Section;
    RunConfig c;
    Section root(doc, "");

    if (const auto* node = root.child("grid")) {
        Section s(*node, "/grid");
        s.read("Lx", c.grid.Lx);
        s.read("Ly", c.grid.Ly);
        s.read("nx", c.grid.nx);
        s.read("ny", c.grid.ny);
        require(c.grid.Lx > 0.0, s.path("Lx"), "must be positive");
        require(c.grid.Ly > 0.0, s.path("Ly"), "must be positive");
        require(c.grid.nx >= 2, s.path("nx"), "must be at least 2");
        require(c.grid.ny >= 2, s.path("ny"), "must be at least 2");
        s.finish();
    }
    if (const auto* node = root.child("material")) {
        Section s(*node, "/material");
        s.read("A", c.A);
        s.read("c0", c.c0);
        s.read("phi", c.porosity);
        s.read("H", c.thickness);
        s.read("rho", c.density);
        s.read("g", c.gravity);
        s.read("p0", c.simulation.p0);
        s.read("p_th", c.simulation.p_th);
        require(c.A >= 0.0 && c.A < 1.0, s.path("A"), "must lie in [0, 1)");
        require(c.c0 > 0.0, s.path("c0"), "must be positive");
        require(c.porosity > 0.0 && c.porosity <= 1.0, s.path("phi"), "must lie in (0, 1]");
        require(c.thickness > 0.0, s.path("H"), "must be positive");
        require(c.density > 0.0, s.path("rho"), "must be positive");
        require(c.gravity > 0.0, s.path("g"), "must be positive");
        require(c.simulation.p0 > 0.0, s.path("p0"), "must be positive");
        require(c.simulation.p_th > 0.0, s.path("p_th"), "must be positive");
        s.finish();
    }
    if (const auto* node = root.child("sim")) {
        Section s(*node, "/sim");
        s.read("dt_pde", c.simulation.dt_pde);
        s.read("T", c.simulation.T);
        s.read("sample_interval", c.simulation.sample_interval);
        s.read("stop_fraction", c.simulation.stop_fraction);
        s.read("noise", c.noise);
        std::string solver = "cg";
        s.read("solver", solver);
        if (solver == "cg") {
            c.simulation.step.solver = pde::LinearSolver::conjugate_gradient;
        } else if (solver == "cholesky") {
            c.simulation.step.solver = pde::LinearSolver::sparse_cholesky;
        } else {
            Section::fail(s.path("solver"), "expected \"cg\" or \"cholesky\"");
        }
        require(c.simulation.dt_pde > 0.0, s.path("dt_pde"), "must be positive");
        require(c.simulation.T > 0.0, s.path("T"), "must be positive");
        require(c.simulation.sample_interval >= c.simulation.dt_pde, s.path("sample_interval"),
                "must be at least dt_pde");
        require(c.simulation.stop_fraction > 0.0 && c.simulation.stop_fraction <= 1.0,
                s.path("stop_fraction"), "must lie in (0, 1]");
        require(c.noise >= 0.0, s.path("noise"), "must be non-negative");
        s.finish();
    }
    if (const auto* node = root.child("sensors")) {
        Section s(*node, "/sensors");
        s.read("n_sensors", c.n_sensors);
        require(c.n_sensors >= 2 && c.n_sensors <= c.grid.columns(), s.path("n_sensors"),
                "must lie in [2, nx+1]");
        s.finish();
    }
    if (const auto* node = root.child("model")) {
        Section s(*node, "/model");
        s.read("order", c.order);
        s.read("Y_min", c.model.y_min);
        require(c.order == 2 || c.order == 4, s.path("order"), "must be 2 or 4");
        require(c.model.y_min > 0.0, s.path("Y_min"), "must be positive");
        s.finish();
    }
    if (const auto* node = root.child("filter")) {
        Section s(*node, "/filter");
        s.read("Ps", c.filter.Ps);
        s.read("substep", c.filter.substep);
        s.read("substep_fraction", c.filter.substep_fraction);
        s.read("max_step_norm", c.filter.max_step_norm);
        require(c.filter.Ps > 0.0, s.path("Ps"), "must be positive");
        require(c.filter.substep >= 0.0, s.path("substep"), "must be non-negative");
        require(c.filter.substep_fraction > 0.0, s.path("substep_fraction"), "must be positive");
        require(c.filter.max_step_norm > 0.0, s.path("max_step_norm"), "must be positive");
        s.finish();
    }
    if (const auto* node = root.child("mle")) {
        Section s(*node, "/mle");
        s.read("multistart", c.mle.multistart);
        s.read("max_evals", c.mle.simplex.max_evaluations);
        s.read("x_tol", c.mle.simplex.x_tolerance);
        s.read("f_tol", c.mle.simplex.f_tolerance);
        s.read("initial_step", c.mle.simplex.initial_step);
        require(c.mle.multistart >= 1, s.path("multistart"), "must be at least 1");
        require(c.mle.simplex.max_evaluations >= 1, s.path("max_evals"), "must be at least 1");
        require(c.mle.simplex.x_tolerance > 0.0, s.path("x_tol"), "must be positive");
        require(c.mle.simplex.f_tolerance > 0.0, s.path("f_tol"), "must be positive");
        require(c.mle.simplex.initial_step > 0.0, s.path("initial_step"), "must be positive");
        s.finish();
    }
    if (const auto* node = root.child("scenario")) {
        Section s(*node, "/scenario");
        c.scenario = detail::read_scenario(s);
        s.finish();
    }
    if (const auto* node = root.child("sweep")) {
        Section s(*node, "/sweep");
        s.read("sample_intervals", c.sweep.sample_intervals);
        s.read("noise_stds", c.sweep.noise_stds);
        s.read("sensor_counts", c.sweep.sensor_counts);
        s.read("orders", c.sweep.orders);
        s.read("replicates", c.sweep.replicates);
        s.read("threads", c.sweep.threads);
        if (const auto* list = s.child("scenarios")) {
            require(list->is_array(), s.path("scenarios"), "expected an array");
            c.sweep.scenarios.clear();
            for (std::size_t k = 0; k < list->size(); ++k) {
                Section e((*list)[k], s.path("scenarios") + "/" + std::to_string(k));
                eval::NamedScenario named;
                e.read("name", named.name);
                e.read("sensor_counts", named.sensor_counts);
                e.read("orders", named.orders);
                named.scenario = detail::read_scenario(e);
                if (!e.has("name")) named.name = std::string(faults::to_string(named.scenario.kind));
                require(!named.name.empty() && named.name.find_first_of(",\n\r") == std::string::npos,
                        e.path("name"), "must be non-empty without commas or newlines");
                e.finish();
                c.sweep.scenarios.push_back(std::move(named));
            }
        }
        for (const char* key : {"sample_intervals", "noise_stds", "sensor_counts", "orders", "scenarios"})
            if (s.has(key)) require(!(*node)[key].empty(), s.path(key), "must not be empty");
        for (double v : c.sweep.sample_intervals)
            require(v >= c.simulation.dt_pde, s.path("sample_intervals"), "entries must be at least dt_pde");
        for (double v : c.sweep.noise_stds) require(v >= 0.0, s.path("noise_stds"), "entries must be non-negative");
        for (int v : c.sweep.sensor_counts)
            require(v >= 2 && v <= c.grid.columns(), s.path("sensor_counts"), "entries must lie in [2, nx+1]");
        for (int v : c.sweep.orders) require(v == 2 || v == 4, s.path("orders"), "entries must be 2 or 4");
        require(c.sweep.replicates >= 1, s.path("replicates"), "must be at least 1");
        require(c.sweep.threads >= 0, s.path("threads"), "must be non-negative");
        s.finish();
    }
    root.read("seed", c.seed);
    root.finish();
    c.mle.filter = c.filter;
    c.mle.model = c.model;
    c.mle.seed = c.seed;
    c.sweep.master_seed = c.seed;
    return c;
}

/// Parses JSON text; syntax errors become ConfigError.
inline RunConfig parse_text(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config: malformed JSON: ") + e.what());
    }
    return parse(doc);
}

}  // namespace flowfront::config
