// flowfront simulate|inject|fit|evaluate|sweep --config <path> --out <path> [--seed N]
// Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "flowfront/config.hpp"
#include "flowfront/error.hpp"
#include "flowfront/eval.hpp"
#include "flowfront/faults.hpp"
#include "flowfront/io.hpp"
#include "flowfront/mle.hpp"
#include "flowfront/pde_sim.hpp"
#include "flowfront/sde_model.hpp"

namespace fs = std::filesystem;
using namespace flowfront;

namespace {

struct Args {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<int> sensors;
    std::string data;
    std::string truth;
    std::string params;
    std::string init;
};

config::RunConfig load(const Args& args) {
    config::RunConfig cfg = args.config.empty() ? config::parse(nlohmann::json::object())
                                                : config::parse_text(io::read_file(args.config));
    if (args.seed) {
        cfg.seed = *args.seed;
        cfg.mle.seed = cfg.seed;
        cfg.sweep.master_seed = cfg.seed;
    }
    if (args.sensors) {
        if (*args.sensors < 2 || *args.sensors > cfg.grid.columns())
            throw ConfigError("--sensors must lie in [2, nx+1]");
        cfg.n_sensors = *args.sensors;
    }
    return cfg;
}

std::vector<filter::ObservationFrame> load_frames(const std::string& path) {
    if (path.empty()) throw ConfigError("--data is required");
    return io::frames_from_csv(io::read_file(path));
}

void run_simulate(const Args& args) {
    const config::RunConfig cfg = load(args);
    const pde::FrontSeries full = pde::simulate(cfg.material(), cfg.simulation);
    pde::FrontSeries series = cfg.sensor_count() == full.lines()
                                  ? full
                                  : pde::select_lines(full, cfg.sensor_count());
    series = pde::add_noise(series, cfg.noise, cfg.seed);
    io::write_file_atomic(args.out, io::series_to_csv(series));
}

void run_inject(const Args& args) {
    const config::RunConfig cfg = load(args);
    const auto frames = load_frames(args.data);
    faults::FaultScenario scenario = cfg.scenario;
    scenario.seed = eval::mix_seed(scenario.seed, cfg.seed);
    io::write_file_atomic(args.out, io::frames_to_csv(faults::apply_scenario(frames, scenario)));
}

sde::Stencil stencil_for(const config::RunConfig& cfg, int lines) {
    return sde::build_stencil(lines, cfg.order, cfg.grid.Lx / (lines - 1));
}

int data_width(const config::RunConfig& cfg, const std::vector<filter::ObservationFrame>& frames,
               bool explicit_count) {
    const auto lines = static_cast<int>(frames.front().z.size());
    if (explicit_count && lines != cfg.sensor_count())
        throw ConfigError("data has " + std::to_string(lines) + " line columns but the configuration expects " +
                          std::to_string(cfg.sensor_count()));
    return lines;
}

void run_fit(const Args& args, bool explicit_count) {
    const config::RunConfig cfg = load(args);
    const auto frames = load_frames(args.data);
    const int lines = data_width(cfg, frames, explicit_count);

    bool informative = false;
    for (const auto& f : frames) informative = informative || f.effective_dimension() > 0;
    if (!informative) throw ConfigError("no informative observations");

    const sde::Stencil stencil = stencil_for(cfg, lines);
    const sde::ModelParams theta0 = args.init.empty()
                                        ? mle::initial_params(frames, cfg.model.y_min)
                                        : io::params_from_json(nlohmann::json::parse(io::read_file(args.init)));
    if (theta0.lines() != lines) throw ConfigError("--init has a different number of lines than the data");
    const mle::FitResult fit = mle::estimate(frames, stencil, theta0, cfg.mle);
    if (!(fit.negloglik < mle::kPenalty))
        throw NumericalError("fit: every trial parameter set failed in the filter");
    io::write_file_atomic(args.out, io::fit_to_json(fit).dump(2) + "\n");
}

void write_evaluation(const fs::path& dir, const eval::EvaluationRecord& record) {
    fs::create_directories(dir);
    nlohmann::json summary;
    summary["order"] = record.order;
    summary["n_sensors"] = record.n_sensors;
    summary["avg_rmse"] = record.avg_rmse;
    io::write_file_atomic(dir / "rmse.csv", io::rmse_series_to_csv(record));
    io::write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");
}

/// With --truth, --data and --params: scores the given fit. Otherwise simulates,
/// fits and scores the single setting the configuration describes.
void run_evaluate(const Args& args, bool explicit_count) {
    const config::RunConfig cfg = load(args);
    if (!args.truth.empty() || !args.data.empty() || !args.params.empty()) {
        if (args.truth.empty() || args.data.empty() || args.params.empty())
            throw ConfigError("evaluate needs all of --truth, --data and --params, or none");
        const pde::FrontSeries truth = io::series_from_csv(io::read_file(args.truth), cfg.grid.Ly);
        const auto frames = load_frames(args.data);
        const int lines = data_width(cfg, frames, explicit_count);
        const sde::ModelParams params = io::params_from_json(nlohmann::json::parse(io::read_file(args.params)));
        if (params.lines() != lines) throw ConfigError("--params has a different number of lines than the data");
        const auto columns = pde::sensor_columns(truth.lines() - 1, lines);
        const eval::EvaluationRecord record = eval::evaluate_run(
            truth, frames, columns, params, stencil_for(cfg, lines), cfg.filter, cfg.model);
        write_evaluation(args.out, record);
        return;
    }

    eval::SweepConfig single;
    single.sample_intervals = {cfg.simulation.sample_interval};
    single.noise_stds = {cfg.noise};
    single.sensor_counts = {cfg.sensor_count()};
    single.orders = {cfg.order};
    eval::NamedScenario named;
    named.name = std::string(faults::to_string(cfg.scenario.kind));
    named.scenario = cfg.scenario;
    single.scenarios = {named};
    single.master_seed = cfg.seed;
    single.threads = 1;
    const auto records = eval::run_sweep(single, cfg.sweep_setup());
    if (records.front().error) throw NumericalError(*records.front().error);
    write_evaluation(args.out, records.front());
}

int run_sweep(const Args& args) {
    const config::RunConfig cfg = load(args);
    const auto records = eval::run_sweep(cfg.sweep, cfg.sweep_setup());
    const fs::path dir = args.out;
    fs::create_directories(dir);
    std::size_t ok = 0;
    for (const auto& r : records) {
        if (r.error) {
            std::cerr << "cell " << r.config_id << " failed: " << *r.error << "\n";
            continue;
        }
        ++ok;
        io::write_file_atomic(dir / ("rmse_" + std::to_string(r.config_id) + ".csv"),
                              io::rmse_series_to_csv(r));
    }
    io::write_file_atomic(dir / "sweep.csv", io::sweep_to_csv(records));
    if (ok == 0) {
        std::cerr << "error: every sweep cell failed\n";
        return 3;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Flow-front simulation, fault injection, estimation and evaluation"};
    app.require_subcommand(1);
    Args args;
    std::uint64_t seed = 0;
    int sensors = 0;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", args.config, "JSON run configuration")->check(CLI::ExistingFile);
        cmd->add_option("--out", args.out, "output file or directory")->required();
        cmd->add_option("--seed", seed, "overrides the configuration seed");
    };
    auto* simulate = app.add_subcommand("simulate", "simulate the pressure PDE and write front series CSV");
    add_common(simulate);
    simulate->add_option("--sensors", sensors, "number of line sensors to keep");
    auto* inject = app.add_subcommand("inject", "apply the configured fault scenario to a data CSV");
    add_common(inject);
    inject->add_option("--data", args.data, "observation CSV")->required();
    auto* fit = app.add_subcommand("fit", "maximum-likelihood fit of the flow-front SDE");
    add_common(fit);
    fit->add_option("--data", args.data, "observation CSV")->required();
    fit->add_option("--sensors", sensors, "expected number of line columns");
    fit->add_option("--init", args.init, "starting parameters JSON");
    auto* evaluate = app.add_subcommand("evaluate", "one-step-ahead RMSE of a fitted model");
    add_common(evaluate);
    evaluate->add_option("--data", args.data, "observation CSV");
    evaluate->add_option("--truth", args.truth, "noiseless full-resolution front CSV");
    evaluate->add_option("--params", args.params, "fitted parameters JSON");
    evaluate->add_option("--sensors", sensors, "number of line sensors");
    auto* sweep = app.add_subcommand("sweep", "run the evaluation grid");
    add_common(sweep);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    CLI::App* cmd = app.get_subcommands().front();
    if (cmd->count("--seed") > 0) args.seed = seed;
    bool explicit_count = false;
    if (cmd->get_option_no_throw("--sensors") != nullptr && cmd->count("--sensors") > 0) {
        args.sensors = sensors;
        explicit_count = true;
    }

    try {
        if (!args.config.empty() && !explicit_count) {
            const auto doc = nlohmann::json::parse(io::read_file(args.config), nullptr, false);
            explicit_count = doc.is_object() && doc.contains("sensors") && doc["sensors"].is_object() &&
                             doc["sensors"].contains("n_sensors");
        }
        if (cmd == simulate) run_simulate(args);
        if (cmd == inject) run_inject(args);
        if (cmd == fit) run_fit(args, explicit_count);
        if (cmd == evaluate) run_evaluate(args, explicit_count);
        if (cmd == sweep) return run_sweep(args);
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    }
}
