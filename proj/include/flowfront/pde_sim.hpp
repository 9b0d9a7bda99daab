#pragma once

// Synthetic flow-front data from the Darcy pressure equation
//
//     dh/dp(p) * dp/dt = div( (kappa/mu) * phi * H * grad p ),   h = min(phi*H, p/(rho*g))
//
// on a rectangular mould. Resin enters along y = 0 (p = p0), the outlet y = Ly is held
// at p = 0 and the sides x = 0, x = Lx are no-flux. Space is discretized with a
// vertex-centred finite-volume scheme (5-point stencil, harmonic-mean face
// transmissibilities); time is marched semi-implicitly with dh/dp frozen at the
// previous step.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "flowfront/error.hpp"
#include "flowfront/sparse_cg.hpp"

namespace flowfront::pde {

struct GridSpec {
    double Lx = 0.8;
    double Ly = 0.9;
    int nx = 64;
    int ny = 128;

    double dx() const { return Lx / nx; }
    double dy() const { return Ly / ny; }
    int columns() const { return nx + 1; }
    int rows() const { return ny + 1; }
    int vertex_count() const { return columns() * rows(); }
    int index(int i, int j) const { return j * columns() + i; }
    double x(int i) const { return i * dx(); }
    double y(int j) const { return j * dy(); }

    void validate() const {
        if (!(Lx > 0.0) || !(Ly > 0.0)) throw ConfigError("grid: Lx and Ly must be positive");
        if (nx < 2 || ny < 2) throw ConfigError("grid: nx and ny must be at least 2");
    }
};

/// Physical constants of the mould plus the vertex-indexed kappa/mu field.
struct MaterialField {
    GridSpec grid;
    Eigen::VectorXd kappa_over_mu;  // m^2/(Pa s), indexed by GridSpec::index
    double porosity = 0.5;
    double thickness = 0.01;  // H, m
    double density = 1100.0;  // kg/m^3
    double gravity = 9.81;    // m/s^2
    double A = 0.5;
    double c0 = 6.75e-9;

    /// Pressure at which the gap is completely filled, rho*g*phi*H.
    double fill_pressure() const { return density * gravity * porosity * thickness; }
};

struct PressureField {
    Eigen::VectorXd p;  // Pa, indexed by GridSpec::index
    double t = 0.0;
};

/// Front positions per line over time. `columns` are the grid columns the lines sit on.
struct FrontSeries {
    std::vector<double> times;
    std::vector<Eigen::VectorXd> fronts;
    std::vector<int> columns;
    double Ly = 0.0;

    std::size_t size() const { return times.size(); }
    int lines() const { return static_cast<int>(columns.size()); }
};

inline MaterialField build_coefficient_field(const GridSpec& grid, double A, double c0) {
    grid.validate();
    if (!(A >= 0.0) || !(A < 1.0)) throw ConfigError("material: A must lie in [0, 1)");
    if (!(c0 > 0.0)) throw ConfigError("material: c0 must be positive");

    MaterialField field;
    field.grid = grid;
    field.A = A;
    field.c0 = c0;
    field.kappa_over_mu.resize(grid.vertex_count());
    const double two_pi = 2.0 * std::numbers::pi;
    for (int j = 0; j < grid.rows(); ++j) {
        const double fy = 1.0 - A * std::cos(two_pi * grid.y(j) / grid.Ly);
        for (int i = 0; i < grid.columns(); ++i) {
            const double fx = 1.0 - A * std::cos(two_pi * grid.x(i) / grid.Lx);
            field.kappa_over_mu[grid.index(i, j)] = c0 / (fx * fy);
        }
    }
    return field;
}

/// Storage coefficient dh/dp. The exact fill threshold belongs to the filled branch.
inline double dh_dp(double p, const MaterialField& field) {
    return p < field.fill_pressure() ? 1.0 / (field.density * field.gravity) : 0.0;
}

enum class LinearSolver { conjugate_gradient, sparse_cholesky };

struct StepOptions {
    LinearSolver solver = LinearSolver::conjugate_gradient;
    double cg_tolerance = 1e-10;
    int cg_max_iterations = 20000;
    double bound_slack = 1e-9;     // relative to p0
    double residual_limit = 1e-8;  // relative to p0, Jacobi-scaled max norm
};

struct StepDiagnostics {
    double scaled_residual = 0.0;  // Pa
    int cg_iterations = 0;
};

/// Semi-implicit pressure stepper. The stiffness part of the system is assembled
/// once; each step only rebuilds the storage diagonal.
class PressureStepper {
public:
    PressureStepper(const MaterialField& field, double p0, StepOptions options = {})
        : field_(field), p0_(p0), options_(options) {
        field_.grid.validate();
        if (!(p0 > 0.0)) throw ConfigError("material: p0 must be positive");
        assemble();
    }

    const MaterialField& field() const { return field_; }
    double p0() const { return p0_; }

    /// Empty mould: inlet row at p0, everything else at zero.
    PressureField initial_state() const {
        const GridSpec& g = field_.grid;
        PressureField state;
        state.p = Eigen::VectorXd::Zero(g.vertex_count());
        for (int i = 0; i < g.columns(); ++i) state.p[g.index(i, 0)] = p0_;
        return state;
    }

    PressureField step(const PressureField& current, double dt,
                       StepDiagnostics* diagnostics = nullptr) {
        if (!(dt > 0.0)) throw ConfigError("step_pressure: dt must be positive");
        const GridSpec& g = field_.grid;
        if (current.p.size() != g.vertex_count())
            throw ConfigError("step_pressure: pressure field does not match the grid");

        const int n = unknowns();
        Eigen::VectorXd storage(n);
        Eigen::VectorXd rhs = dirichlet_rhs_;
        Eigen::VectorXd guess(n);
        for (int u = 0; u < n; ++u) {
            const double p_old = current.p[vertex_of(u)];
            storage[u] = volume_[u] * dh_dp(p_old, field_) / dt;
            rhs[u] += storage[u] * p_old;
            guess[u] = p_old;
        }

        system_ = stiffness_;
        for (int u = 0; u < n; ++u) system_.coeffRef(u, u) += storage[u];

        Eigen::VectorXd solution = guess;
        int iterations = 0;
        if (options_.solver == LinearSolver::sparse_cholesky) {
            if (!analyzed_) {
                cholesky_.analyzePattern(system_);
                analyzed_ = true;
            }
            cholesky_.factorize(system_);
            if (cholesky_.info() != Eigen::Success)
                throw NumericalError("step_pressure: sparse factorization failed");
            solution = cholesky_.solve(rhs);
        } else {
            const CgResult cg = solve_pcg(system_, rhs, solution, options_.cg_tolerance,
                                          options_.cg_max_iterations);
            iterations = cg.iterations;
            if (!cg.converged) {
                std::ostringstream msg;
                msg << "step_pressure: conjugate gradient did not converge after "
                    << cg.iterations << " iterations (relative residual "
                    << cg.relative_residual << ")";
                throw NumericalError(msg.str());
            }
        }

        const Eigen::VectorXd residual = rhs - system_ * solution;
        const double scaled =
            residual.cwiseQuotient(system_.diagonal()).cwiseAbs().maxCoeff();
        if (!(scaled <= options_.residual_limit * p0_)) {
            std::ostringstream msg;
            msg << "step_pressure: linear residual " << scaled << " Pa exceeds limit";
            throw NumericalError(msg.str());
        }

        PressureField next;
        next.t = current.t + dt;
        next.p = current.p;
        const double slack = options_.bound_slack * p0_;
        for (int u = 0; u < n; ++u) {
            double value = solution[u];
            if (value < 0.0 || value > p0_) {
                if (value < -slack || value > p0_ + slack || !std::isfinite(value)) {
                    std::ostringstream msg;
                    msg << "step_pressure: pressure " << value << " outside [0, p0]";
                    throw NumericalError(msg.str());
                }
                value = std::clamp(value, 0.0, p0_);
            }
            next.p[vertex_of(u)] = value;
        }
        if (diagnostics) {
            diagnostics->scaled_residual = scaled;
            diagnostics->cg_iterations = iterations;
        }
        return next;
    }

private:
    int unknowns() const { return field_.grid.columns() * (field_.grid.ny - 1); }
    // Unknowns are the interior rows j = 1 .. ny-1.
    int vertex_of(int u) const { return u + field_.grid.columns(); }

    double conductivity(int vertex) const {
        return field_.kappa_over_mu[vertex] * field_.porosity * field_.thickness;
    }

    double face(int a, int b) const {
        const double ka = conductivity(a);
        const double kb = conductivity(b);
        return 2.0 * ka * kb / (ka + kb);
    }

    void assemble() {
        const GridSpec& g = field_.grid;
        const int n = unknowns();
        const int cols = g.columns();
        const double dx = g.dx();
        const double dy = g.dy();

        volume_.resize(n);
        dirichlet_rhs_ = Eigen::VectorXd::Zero(n);
        std::vector<Eigen::Triplet<double>> entries;
        entries.reserve(static_cast<std::size_t>(n) * 5);

        auto couple = [&](int u, int v, double t) {
            entries.emplace_back(u, u, t);
            entries.emplace_back(v, v, t);
            entries.emplace_back(u, v, -t);
            entries.emplace_back(v, u, -t);
        };

        for (int j = 1; j < g.ny; ++j) {
            for (int i = 0; i < cols; ++i) {
                const int u = (j - 1) * cols + i;
                const double width = (i == 0 || i == g.nx) ? 0.5 * dx : dx;
                volume_[u] = width * dy;
                const int vertex = g.index(i, j);

                if (i + 1 < cols) couple(u, u + 1, face(vertex, g.index(i + 1, j)) * dy / dx);

                const double t_up = face(vertex, g.index(i, j + 1)) * width / dy;
                if (j + 1 < g.ny) {
                    couple(u, u + cols, t_up);
                } else {
                    entries.emplace_back(u, u, t_up);  // outlet, p = 0
                }
                if (j == 1) {
                    const double t_down = face(vertex, g.index(i, 0)) * width / dy;
                    entries.emplace_back(u, u, t_down);
                    dirichlet_rhs_[u] += t_down * p0_;
                }
            }
        }
        stiffness_.resize(n, n);
        stiffness_.setFromTriplets(entries.begin(), entries.end());
        stiffness_.makeCompressed();
    }

    MaterialField field_;
    double p0_;
    StepOptions options_;
    Eigen::VectorXd volume_;
    Eigen::VectorXd dirichlet_rhs_;
    Eigen::SparseMatrix<double> stiffness_;
    Eigen::SparseMatrix<double> system_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> cholesky_;
    bool analyzed_ = false;
};

inline PressureField step_pressure(const PressureField& current, double dt,
                                   const MaterialField& field, double p0,
                                   StepOptions options = {},
                                   StepDiagnostics* diagnostics = nullptr) {
    PressureStepper stepper(field, p0, options);
    return stepper.step(current, dt, diagnostics);
}

/// Front position per grid column: the thresholded, normalized pressure sum along y.
inline Eigen::VectorXd extract_front(const PressureField& state, double p_th,
                                     const GridSpec& grid) {
    if (!(p_th > 0.0)) throw ConfigError("extract_front: p_th must be positive");
    Eigen::VectorXd front(grid.columns());
    for (int i = 0; i < grid.columns(); ++i) {
        double sum = 0.0;
        for (int j = 0; j < grid.rows(); ++j)
            sum += std::max(std::min(state.p[grid.index(i, j)], p_th), 0.0);
        front[i] = grid.Ly * sum / (p_th * grid.rows());
    }
    return front;
}

struct SimulationSettings {
    double p0 = 1e5;
    double p_th = 1e3;
    double dt_pde = 0.5;
    double T = 1800.0;
    double sample_interval = 1.0;
    double stop_fraction = 0.99;
    StepOptions step;
};

/// Time-marches from the empty mould, sampling the front at multiples of the
/// sample interval (t = 0 included). Stops at T, or once every line reaches
/// stop_fraction of the largest attainable front, Ly * ny / (ny + 1) (the outlet
/// row is pinned at zero pressure and never counts as filled).
inline FrontSeries simulate(const MaterialField& field, const SimulationSettings& settings) {
    const GridSpec& grid = field.grid;
    if (!(settings.T > 0.0)) throw ConfigError("sim: T must be positive");
    if (!(settings.dt_pde > 0.0)) throw ConfigError("sim: dt_pde must be positive");
    if (!(settings.sample_interval >= settings.dt_pde))
        throw ConfigError("sim: sample_interval must be at least dt_pde");

    PressureStepper stepper(field, settings.p0, settings.step);
    PressureField state = stepper.initial_state();

    FrontSeries series;
    series.Ly = grid.Ly;
    series.columns.resize(grid.columns());
    for (int i = 0; i < grid.columns(); ++i) series.columns[i] = i;

    const double stop_level = settings.stop_fraction * grid.Ly * grid.ny / grid.rows();
    auto record = [&](double t) {
        series.times.push_back(t);
        series.fronts.push_back(extract_front(state, settings.p_th, grid));
        return series.fronts.back().minCoeff() >= stop_level;
    };

    if (record(0.0)) return series;
    const double eps = 1e-9 * settings.sample_interval;
    for (long k = 1;; ++k) {
        const double t_sample = k * settings.sample_interval;
        if (t_sample > settings.T + eps) break;
        while (state.t < t_sample - eps) {
            const double dt = std::min(settings.dt_pde, t_sample - state.t);
            state = stepper.step(state, dt);
        }
        state.t = t_sample;
        if (record(t_sample)) break;
    }
    return series;
}

/// Gaussian measurement noise, clamped to [0, Ly].
inline FrontSeries add_noise(const FrontSeries& series, double s, std::uint64_t seed) {
    if (!(s >= 0.0)) throw ConfigError("add_noise: s must be non-negative");
    FrontSeries out = series;
    if (s == 0.0) return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, s);
    for (auto& front : out.fronts)
        for (Eigen::Index l = 0; l < front.size(); ++l)
            front[l] = std::clamp(front[l] + noise(rng), 0.0, series.Ly);
    return out;
}

/// Equally spaced sensor columns over 0..nx, interior ones rounded to the nearest column.
inline std::vector<int> sensor_columns(int nx, int n_sensors) {
    if (n_sensors < 2 || n_sensors > nx + 1)
        throw ConfigError("sensors: n_sensors must lie in [2, nx+1]");
    std::vector<int> cols(n_sensors);
    for (int k = 0; k < n_sensors; ++k)
        cols[k] = static_cast<int>(std::lround(static_cast<double>(k) * nx / (n_sensors - 1)));
    return cols;
}

/// Keeps `n_sensors` equally spaced lines of a full-resolution series.
inline FrontSeries select_lines(const FrontSeries& series, int n_sensors) {
    const int full = series.lines();
    const std::vector<int> picks = sensor_columns(full - 1, n_sensors);
    FrontSeries out;
    out.times = series.times;
    out.Ly = series.Ly;
    out.columns.reserve(picks.size());
    for (int k : picks) out.columns.push_back(series.columns[k]);
    out.fronts.reserve(series.size());
    for (const auto& front : series.fronts) {
        Eigen::VectorXd reduced(n_sensors);
        for (int k = 0; k < n_sensors; ++k) reduced[k] = front[picks[k]];
        out.fronts.push_back(std::move(reduced));
    }
    return out;
}

/// Keeps every `stride`-th sample of a series.
inline FrontSeries subsample(const FrontSeries& series, int stride) {
    if (stride < 1) throw ConfigError("subsample: stride must be positive");
    FrontSeries out;
    out.columns = series.columns;
    out.Ly = series.Ly;
    for (std::size_t k = 0; k < series.size(); k += stride) {
        out.times.push_back(series.times[k]);
        out.fronts.push_back(series.fronts[k]);
    }
    return out;
}

}  // namespace flowfront::pde
