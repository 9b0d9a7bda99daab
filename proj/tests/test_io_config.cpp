#include <gtest/gtest.h>

#include "flowfront/config.hpp"
#include "flowfront/io.hpp"

using namespace flowfront;

TEST(Csv, FramesRoundTripWithMissingValues) {
    std::vector<filter::ObservationFrame> frames;
    frames.push_back(filter::ObservationFrame::full(0.0, Eigen::Vector3d(0.1, 0.123456789012, 0.3)));
    frames.push_back(filter::ObservationFrame::full(1.5, Eigen::Vector3d(0.2, 0.25, 0.35)));
    frames[1].mask[1] = false;
    const std::string text = io::frames_to_csv(frames);
    EXPECT_EQ(text, "t,line_0,line_1,line_2\n0,0.1,0.123456789,0.3\n1.5,0.2,NaN,0.35\n");
    const auto back = io::frames_from_csv(text);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_FALSE(back[1].mask[1]);
    EXPECT_TRUE(back[1].mask[0]);
    EXPECT_EQ(io::frames_to_csv(back), text);
}

TEST(Csv, RejectsMalformedInput) {
    EXPECT_THROW(io::frames_from_csv(""), ConfigError);
    EXPECT_THROW(io::frames_from_csv("time,line_0\n0,1\n"), ConfigError);
    EXPECT_THROW(io::frames_from_csv("t,line_0,line_2\n0,1,2\n"), ConfigError);
    EXPECT_THROW(io::frames_from_csv("t,line_0\n0,1,2\n"), ConfigError);
    EXPECT_THROW(io::frames_from_csv("t,line_0\n0,abc\n"), ConfigError);
    EXPECT_THROW(io::frames_from_csv("t,line_0\n0,nan\n"), ConfigError);
    EXPECT_THROW(io::frames_from_csv("t,line_0\nNaN,1\n"), ConfigError);
    EXPECT_THROW(io::frames_from_csv("t,line_0\n"), ConfigError);
}

TEST(Csv, TruthSeriesRefusesMissingValues) {
    EXPECT_THROW(io::series_from_csv("t,line_0,line_1\n0,NaN,1\n", 0.9), ConfigError);
    const pde::FrontSeries s = io::series_from_csv("t,line_0,line_1\r\n0,0.5,1\r\n", 0.9);
    EXPECT_EQ(s.columns, (std::vector<int>{0, 1}));
    EXPECT_EQ(s.fronts[0][1], 1.0);
}

TEST(Json, FitSurface) {
    mle::FitResult fit;
    fit.theta_hat.C0 = Eigen::Vector2d(1e-4, 2e-4);
    fit.theta_hat.D0 = -3e-7;
    fit.theta_hat.sigma = 2e-3;
    fit.theta_hat.s_meas = 1e-3;
    fit.negloglik = -12.5;
    fit.converged = true;
    const nlohmann::json j = io::fit_to_json(fit);
    for (const char* key : {"C0", "D0", "sigma", "s_meas", "negloglik", "converged"}) EXPECT_TRUE(j.contains(key));
    EXPECT_EQ(j.size(), 6u);
    const sde::ModelParams p = io::params_from_json(j);
    EXPECT_EQ(p.C0, fit.theta_hat.C0);
    EXPECT_EQ(p.D0, fit.theta_hat.D0);
    EXPECT_THROW(io::params_from_json(nlohmann::json{{"C0", {1e-4}}}), ConfigError);
}

TEST(SweepTable, HeaderRowsAndErrors) {
    eval::EvaluationRecord ok;
    ok.config_id = 0;
    ok.order = 4;
    ok.n_sensors = 8;
    ok.sample_interval = 5.0;
    ok.noise = 0.01;
    ok.avg_rmse = 0.0123456789123;
    eval::EvaluationRecord bad = ok;
    bad.config_id = 1;
    bad.error = "update: bad, very bad";
    const std::string text = io::sweep_to_csv({ok, bad});
    EXPECT_EQ(text,
              "config_id,order,n_sensors,dt,noise,scenario,replicate,avg_rmse\n"
              "0,4,8,5,0.01,none,0,0.0123456789\n"
              "1,4,8,5,0.01,none,0,error:update: bad; very bad\n");
    ok.times = {1.0, 2.0};
    ok.rmse = {0.5, 0.25};
    EXPECT_EQ(io::rmse_series_to_csv(ok), "t,rmse\n1,0.5\n2,0.25\n");
}

TEST(Config, DefaultsWhenEmpty) {
    const config::RunConfig c = config::parse_text("{}");
    EXPECT_EQ(c.grid.nx, 64);
    EXPECT_EQ(c.grid.ny, 128);
    EXPECT_EQ(c.sensor_count(), 65);
    EXPECT_EQ(c.order, 4);
    EXPECT_EQ(c.sweep.orders, (std::vector<int>{2, 4}));
    EXPECT_EQ(c.seed, 0u);
}

TEST(Config, ReadsEverySection) {
    const config::RunConfig c = config::parse_text(R"({
        "grid": {"Lx": 0.4, "Ly": 0.5, "nx": 8, "ny": 16},
        "material": {"A": 0.2, "c0": 1e-8, "phi": 0.4, "H": 0.02, "rho": 1000, "g": 9.8, "p0": 9e4, "p_th": 500},
        "sim": {"dt_pde": 0.25, "T": 100, "sample_interval": 2, "noise": 0.01, "solver": "cholesky"},
        "sensors": {"n_sensors": 5},
        "model": {"order": 2, "Y_min": 0.002},
        "filter": {"Ps": 5, "substep": 0.5, "max_step_norm": 0.25},
        "mle": {"multistart": 2, "max_evals": 100, "x_tol": 1e-5, "f_tol": 1e-5},
        "scenario": {"kind": "partial_dropout", "sensors": [1, 3], "fraction": 0.7, "seed": 4},
        "sweep": {"sample_intervals": [2, 4], "noise_stds": [0.01], "sensor_counts": [5], "orders": [4],
                  "replicates": 3, "threads": 1,
                  "scenarios": [{"name": "drop1", "kind": "drop_sensor", "sensors": [1], "orders": [2]}]},
        "seed": 17
    })");
    EXPECT_EQ(c.grid.nx, 8);
    EXPECT_EQ(c.material().porosity, 0.4);
    EXPECT_EQ(c.simulation.p_th, 500);
    EXPECT_EQ(c.simulation.step.solver, pde::LinearSolver::sparse_cholesky);
    EXPECT_EQ(c.n_sensors, 5);
    EXPECT_EQ(c.model.y_min, 0.002);
    EXPECT_EQ(c.mle.filter.Ps, 5);
    EXPECT_EQ(c.mle.simplex.max_evaluations, 100);
    EXPECT_EQ(c.scenario.kind, faults::FaultKind::partial_dropout);
    EXPECT_EQ(c.scenario.sensors, (std::vector<int>{1, 3}));
    ASSERT_EQ(c.sweep.scenarios.size(), 1u);
    EXPECT_EQ(c.sweep.scenarios[0].name, "drop1");
    EXPECT_EQ(c.sweep.scenarios[0].orders, (std::vector<int>{2}));
    EXPECT_EQ(c.sweep.master_seed, 17u);
    EXPECT_EQ(c.mle.seed, 17u);
}

TEST(Config, ErrorsNameTheOffendingPointer) {
    auto message = [](const std::string& text) {
        try {
            config::parse_text(text);
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    EXPECT_NE(message(R"({"grid": {"nx": 64, "nz": 3}})").find("/grid/nz"), std::string::npos);
    EXPECT_NE(message(R"({"bogus": 1})").find("/bogus"), std::string::npos);
    EXPECT_NE(message(R"({"material": {"A": 1.5}})").find("/material/A"), std::string::npos);
    EXPECT_NE(message(R"({"sim": {"T": "long"}})").find("/sim/T"), std::string::npos);
    EXPECT_NE(message(R"({"sweep": {"noise_stds": []}})").find("/sweep/noise_stds"), std::string::npos);
    EXPECT_NE(message(R"({"sweep": {"orders": [2, 3]}})").find("/sweep/orders"), std::string::npos);
    EXPECT_NE(message(R"({"sweep": {"scenarios": [{"kind": "x"}]}})").find("/sweep/scenarios/0/kind"),
              std::string::npos);
    EXPECT_NE(message(R"({"scenario": {"fraction": 2}})").find("/scenario/fraction"), std::string::npos);
    EXPECT_NE(message(R"({"seed": -1})").find("/seed"), std::string::npos);
    EXPECT_NE(message("{not json").find("malformed"), std::string::npos);
    EXPECT_NE(message("[1, 2]").find("expected an object"), std::string::npos);
}
