#pragma once

// One-step-ahead accuracy of fitted models against the full-resolution simulated
// front, and the sweep harness that produces it over a grid of settings.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "flowfront/cdekf.hpp"
#include "flowfront/error.hpp"
#include "flowfront/faults.hpp"
#include "flowfront/mle.hpp"
#include "flowfront/pde_sim.hpp"
#include "flowfront/sde_model.hpp"

namespace flowfront::eval {

/// Piecewise-linear interpolation in x of sensor values onto every grid column.
inline Eigen::VectorXd interpolate_front(const Eigen::VectorXd& predictions,
                                         const std::vector<int>& sensor_columns,
                                         int full_columns) {
    const auto n = static_cast<Eigen::Index>(sensor_columns.size());
    if (predictions.size() != n || n < 2)
        throw ConfigError("interpolate_front: need one prediction per sensor (at least two)");
    if (sensor_columns.front() != 0 || sensor_columns.back() != full_columns - 1)
        throw ConfigError("interpolate_front: sensors must span the first and last columns");

    Eigen::VectorXd out(full_columns);
    Eigen::Index seg = 0;
    for (int col = 0; col < full_columns; ++col) {
        while (seg + 2 < n && sensor_columns[static_cast<std::size_t>(seg + 1)] < col) ++seg;
        const int a = sensor_columns[static_cast<std::size_t>(seg)];
        const int b = sensor_columns[static_cast<std::size_t>(seg + 1)];
        const double w = static_cast<double>(col - a) / static_cast<double>(b - a);
        out[col] = (1.0 - w) * predictions[seg] + w * predictions[seg + 1];
    }
    return out;
}

/// Mean over columns of sqrt((truth - estimate)^2), i.e. the mean absolute error.
inline double rmse_t(const Eigen::VectorXd& truth, const Eigen::VectorXd& estimate) {
    if (truth.size() != estimate.size() || truth.size() == 0)
        throw ConfigError("rmse_t: vectors must be non-empty and of equal length");
    double sum = 0.0;
    for (Eigen::Index l = 0; l < truth.size(); ++l) {
        const double d = truth[l] - estimate[l];
        sum += std::sqrt(d * d);
    }
    return sum / static_cast<double>(truth.size());
}

struct EvaluationRecord {
    int config_id = 0;
    int order = 0;
    int n_sensors = 0;
    double sample_interval = 0.0;
    double noise = 0.0;
    std::string scenario = "none";
    int replicate = 0;
    double avg_rmse = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> times;
    std::vector<double> rmse;
    std::optional<std::string> error;
};

inline std::vector<filter::ObservationFrame> frames_from_series(const pde::FrontSeries& series) {
    std::vector<filter::ObservationFrame> frames;
    frames.reserve(series.size());
    for (std::size_t k = 0; k < series.size(); ++k)
        frames.push_back(filter::ObservationFrame::full(series.times[k], series.fronts[k]));
    return frames;
}

/// Scores the filter's pre-update predictions at every frame after the first.
inline EvaluationRecord evaluate_run(const pde::FrontSeries& truth,
                                     const std::vector<filter::ObservationFrame>& frames,
                                     const std::vector<int>& sensor_columns,
                                     const sde::ModelParams& params, const sde::Stencil& stencil,
                                     const filter::FilterOptions& filter_options = {},
                                     const sde::ModelOptions& model_options = {}) {
    if (truth.size() != frames.size())
        throw ConfigError("evaluate_run: truth and observations have different lengths");
    for (std::size_t k = 0; k < frames.size(); ++k)
        if (std::abs(truth.times[k] - frames[k].t) > 1e-9 * std::max(1.0, truth.times[k]))
            throw ConfigError("evaluate_run: truth and observations are sampled at different times");

    const filter::FlowFrontModel model(params, stencil, model_options);
    const filter::FilterResult run = filter::filter_pass(frames, model, filter_options);

    EvaluationRecord record;
    record.order = stencil.order;
    record.n_sensors = stencil.n;
    const int full = truth.lines();
    for (std::size_t k = 0; k < run.steps.size(); ++k) {
        const Eigen::VectorXd estimate =
            interpolate_front(run.steps[k].prediction, sensor_columns, full);
        record.times.push_back(frames[k + 1].t);
        record.rmse.push_back(rmse_t(truth.fronts[k + 1], estimate));
    }
    record.avg_rmse = record.rmse.empty()
                          ? 0.0
                          : std::accumulate(record.rmse.begin(), record.rmse.end(), 0.0) /
                                static_cast<double>(record.rmse.size());
    return record;
}

struct NamedScenario {
    std::string name = "none";
    faults::FaultScenario scenario;
    std::vector<int> sensor_counts;  // empty: the sweep's list
    std::vector<int> orders;         // empty: the sweep's list
};

struct SweepConfig {
    std::vector<double> sample_intervals{1.0, 5.0, 20.0};
    std::vector<double> noise_stds{0.002, 0.01, 0.05};
    std::vector<int> sensor_counts{5, 8, 12};
    std::vector<int> orders{2, 4};
    std::vector<NamedScenario> scenarios{NamedScenario{}};
    int replicates = 1;
    std::uint64_t master_seed = 0;
    int threads = 0;  // 0: hardware concurrency

    void validate() const {
        if (sample_intervals.empty() || noise_stds.empty() || sensor_counts.empty() ||
            orders.empty() || scenarios.empty())
            throw ConfigError("sweep: lists must be non-empty");
        if (replicates < 1) throw ConfigError("sweep: replicates must be at least 1");
    }
};

/// Everything a sweep needs besides the grid of settings.
struct SweepSetup {
    pde::MaterialField material;
    pde::SimulationSettings simulation;
    mle::MleOptions mle;
    filter::FilterOptions filter;
    sde::ModelOptions model;
};

/// splitmix64 finalizer, used to derive independent per-cell seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

struct SweepCell {
    int config_id = 0;
    int order = 0;
    int n_sensors = 0;
    std::size_t interval_index = 0;
    std::size_t noise_index = 0;
    std::size_t scenario_index = 0;
    int replicate = 0;
};

/// Cells ordered replicate-major, then scenario, sensor count, interval, noise, order.
inline std::vector<SweepCell> enumerate_cells(const SweepConfig& config) {
    std::vector<SweepCell> cells;
    for (int rep = 0; rep < config.replicates; ++rep)
        for (std::size_t sc = 0; sc < config.scenarios.size(); ++sc) {
            const auto& counts = config.scenarios[sc].sensor_counts.empty()
                                     ? config.sensor_counts
                                     : config.scenarios[sc].sensor_counts;
            const auto& orders = config.scenarios[sc].orders.empty()
                                     ? config.orders
                                     : config.scenarios[sc].orders;
            for (int n : counts)
                for (std::size_t di = 0; di < config.sample_intervals.size(); ++di)
                    for (std::size_t ni = 0; ni < config.noise_stds.size(); ++ni)
                        for (int order : orders) {
                            SweepCell cell;
                            cell.config_id = static_cast<int>(cells.size());
                            cell.order = order;
                            cell.n_sensors = n;
                            cell.interval_index = di;
                            cell.noise_index = ni;
                            cell.scenario_index = sc;
                            cell.replicate = rep;
                            cells.push_back(cell);
                        }
        }
    return cells;
}

/// Noiseless full-resolution truth per sampling interval. One PDE run at the
/// smallest interval is subsampled when the others are integer multiples of it.
inline std::map<std::size_t, pde::FrontSeries> simulate_truths(const SweepConfig& config,
                                                               const SweepSetup& setup) {
    std::map<std::size_t, pde::FrontSeries> out;
    const double base = *std::min_element(config.sample_intervals.begin(),
                                          config.sample_intervals.end());
    std::optional<pde::FrontSeries> base_series;
    for (std::size_t di = 0; di < config.sample_intervals.size(); ++di) {
        const double interval = config.sample_intervals[di];
        const double ratio = interval / base;
        const double stride = std::round(ratio);
        pde::SimulationSettings settings = setup.simulation;
        if (std::abs(ratio - stride) < 1e-9) {
            if (!base_series) {
                settings.sample_interval = base;
                base_series = pde::simulate(setup.material, settings);
            }
            out[di] = pde::subsample(*base_series, static_cast<int>(stride));
        } else {
            settings.sample_interval = interval;
            out[di] = pde::simulate(setup.material, settings);
        }
    }
    return out;
}

/// Runs one cell: select lines, add noise, inject the fault, fit, evaluate.
inline EvaluationRecord run_cell(const SweepCell& cell, const SweepConfig& config,
                                 const SweepSetup& setup, const pde::FrontSeries& truth) {
    EvaluationRecord record;
    record.config_id = cell.config_id;
    record.order = cell.order;
    record.n_sensors = cell.n_sensors;
    record.sample_interval = config.sample_intervals[cell.interval_index];
    record.noise = config.noise_stds[cell.noise_index];
    record.scenario = config.scenarios[cell.scenario_index].name;
    record.replicate = cell.replicate;
    try {
        // Data seeds ignore the model order so both orders see the same data.
        std::uint64_t data_seed = mix_seed(config.master_seed, cell.interval_index);
        data_seed = mix_seed(data_seed, cell.noise_index);
        data_seed = mix_seed(data_seed, static_cast<std::uint64_t>(cell.n_sensors));
        data_seed = mix_seed(data_seed, static_cast<std::uint64_t>(cell.replicate));

        const pde::FrontSeries sensors = pde::select_lines(truth, cell.n_sensors);
        const pde::FrontSeries noisy = pde::add_noise(sensors, record.noise, data_seed);
        faults::FaultScenario scenario = config.scenarios[cell.scenario_index].scenario;
        scenario.seed = mix_seed(scenario.seed, data_seed);
        const auto frames = faults::apply_scenario(frames_from_series(noisy), scenario);

        const double dx = setup.material.grid.Lx / (cell.n_sensors - 1);
        const sde::Stencil stencil = sde::build_stencil(cell.n_sensors, cell.order, dx);
        mle::MleOptions mle_options = setup.mle;
        mle_options.filter = setup.filter;
        mle_options.model = setup.model;
        mle_options.seed = mix_seed(config.master_seed ^ 0xF17ULL,
                                    static_cast<std::uint64_t>(cell.config_id));
        const sde::ModelParams theta0 = mle::initial_params(frames, setup.model.y_min);
        const mle::FitResult fit = mle::estimate(frames, stencil, theta0, mle_options);

        EvaluationRecord scored = evaluate_run(truth, frames, sensors.columns, fit.theta_hat,
                                               stencil, setup.filter, setup.model);
        record.avg_rmse = scored.avg_rmse;
        record.times = std::move(scored.times);
        record.rmse = std::move(scored.rmse);
    } catch (const std::exception& e) {
        record.avg_rmse = std::numeric_limits<double>::quiet_NaN();
        record.error = e.what();
    }
    return record;
}

/// Runs every cell, concurrently when threads allow. Records come back ordered
/// by config_id whatever the execution order.
inline std::vector<EvaluationRecord> run_sweep(const SweepConfig& config, const SweepSetup& setup) {
    config.validate();
    const std::vector<SweepCell> cells = enumerate_cells(config);
    const std::map<std::size_t, pde::FrontSeries> truths = simulate_truths(config, setup);

    std::vector<EvaluationRecord> records(cells.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++)
            records[i] = run_cell(cells[i], config, setup, truths.at(cells[i].interval_index));
    };

    unsigned threads = config.threads > 0 ? static_cast<unsigned>(config.threads)
                                          : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, cells.size())));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return records;
}

}  // namespace flowfront::eval
