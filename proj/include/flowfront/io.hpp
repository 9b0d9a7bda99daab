#pragma once

// CSV and JSON surfaces: front series / observation frames, fitted parameters,
// sweep tables. Floats are written with 9 significant digits; missing values
// are the literal NaN.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowfront/cdekf.hpp"
#include "flowfront/error.hpp"
#include "flowfront/eval.hpp"
#include "flowfront/mle.hpp"
#include "flowfront/pde_sim.hpp"

namespace flowfront::io {

inline std::string format_number(double value) {
    if (std::isnan(value)) return "NaN";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", value);
    return buf;
}

inline std::string series_header(int lines) {
    std::string out = "t";
    for (int i = 0; i < lines; ++i) out += ",line_" + std::to_string(i);
    return out;
}

inline std::string frames_to_csv(const std::vector<filter::ObservationFrame>& frames) {
    if (frames.empty()) throw ConfigError("csv: nothing to write");
    std::ostringstream out;
    out << series_header(static_cast<int>(frames.front().z.size())) << '\n';
    for (const auto& f : frames) {
        out << format_number(f.t);
        for (Eigen::Index i = 0; i < f.z.size(); ++i)
            out << ',' << (f.mask[static_cast<std::size_t>(i)] ? format_number(f.z[i]) : "NaN");
        out << '\n';
    }
    return out.str();
}

inline std::string series_to_csv(const pde::FrontSeries& series) {
    return frames_to_csv(eval::frames_from_series(series));
}

/// Parses `t,line_0,...` CSV text. NaN entries become masked observations.
inline std::vector<filter::ObservationFrame> frames_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("csv: empty input");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::vector<std::string> header;
    {
        std::istringstream hs(line);
        std::string cell;
        while (std::getline(hs, cell, ',')) header.push_back(cell);
    }
    if (header.size() < 2 || header.front() != "t")
        throw ConfigError("csv: header must start with 't' followed by line columns");
    for (std::size_t i = 1; i < header.size(); ++i)
        if (header[i] != "line_" + std::to_string(i - 1))
            throw ConfigError("csv: unexpected column '" + header[i] + "'");
    const auto lines = static_cast<Eigen::Index>(header.size() - 1);

    std::vector<filter::ObservationFrame> frames;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (static_cast<Eigen::Index>(cells.size()) != lines + 1)
            throw ConfigError("csv: row " + std::to_string(row) + " has " +
                              std::to_string(cells.size()) + " fields, expected " +
                              std::to_string(lines + 1));
        filter::ObservationFrame frame;
        frame.z = Eigen::VectorXd::Zero(lines);
        frame.mask.assign(static_cast<std::size_t>(lines), true);
        auto parse = [&](const std::string& s) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(s, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != s.size() || s.empty() || std::isnan(v))
                throw ConfigError("csv: row " + std::to_string(row) + ": cannot parse '" + s + "'");
            return v;
        };
        frame.t = parse(cells[0]);
        for (Eigen::Index i = 0; i < lines; ++i) {
            const std::string& s = cells[static_cast<std::size_t>(i + 1)];
            if (s == "NaN") {
                frame.mask[static_cast<std::size_t>(i)] = false;
            } else {
                frame.z[i] = parse(s);
            }
        }
        frames.push_back(std::move(frame));
    }
    if (frames.empty()) throw ConfigError("csv: no data rows");
    return frames;
}

/// Full-resolution series from CSV; missing values are not allowed here.
inline pde::FrontSeries series_from_csv(const std::string& text, double Ly) {
    const auto frames = frames_from_csv(text);
    pde::FrontSeries series;
    series.Ly = Ly;
    const auto lines = frames.front().z.size();
    for (Eigen::Index i = 0; i < lines; ++i) series.columns.push_back(static_cast<int>(i));
    for (const auto& f : frames) {
        if (f.effective_dimension() != lines)
            throw ConfigError("csv: truth series must not contain NaN entries");
        series.times.push_back(f.t);
        series.fronts.push_back(f.z);
    }
    return series;
}

inline nlohmann::json fit_to_json(const mle::FitResult& fit) {
    nlohmann::json j;
    j["C0"] = std::vector<double>(fit.theta_hat.C0.data(),
                                  fit.theta_hat.C0.data() + fit.theta_hat.C0.size());
    j["D0"] = fit.theta_hat.D0;
    j["sigma"] = fit.theta_hat.sigma;
    j["s_meas"] = fit.theta_hat.s_meas;
    j["negloglik"] = fit.negloglik;
    j["converged"] = fit.converged;
    return j;
}

inline sde::ModelParams params_from_json(const nlohmann::json& j) {
    try {
        sde::ModelParams params;
        const auto c0 = j.at("C0").get<std::vector<double>>();
        params.C0 = Eigen::Map<const Eigen::VectorXd>(c0.data(), static_cast<Eigen::Index>(c0.size()));
        params.D0 = j.at("D0").get<double>();
        params.sigma = j.at("sigma").get<double>();
        params.s_meas = j.at("s_meas").get<double>();
        params.validate();
        return params;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("params: ") + e.what());
    }
}

inline std::string sweep_to_csv(const std::vector<eval::EvaluationRecord>& records) {
    std::ostringstream out;
    out << "config_id,order,n_sensors,dt,noise,scenario,replicate,avg_rmse\n";
    for (const auto& r : records) {
        out << r.config_id << ',' << r.order << ',' << r.n_sensors << ','
            << format_number(r.sample_interval) << ',' << format_number(r.noise) << ','
            << r.scenario << ',' << r.replicate << ',';
        if (r.error) {
            std::string msg = *r.error;
            for (char& c : msg)
                if (c == ',' || c == '\n' || c == '\r') c = ';';
            out << "error:" << msg;
        } else {
            out << format_number(r.avg_rmse);
        }
        out << '\n';
    }
    return out.str();
}

inline std::string rmse_series_to_csv(const eval::EvaluationRecord& record) {
    std::ostringstream out;
    out << "t,rmse\n";
    for (std::size_t k = 0; k < record.times.size(); ++k)
        out << format_number(record.times[k]) << ',' << format_number(record.rmse[k]) << '\n';
    return out.str();
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Writes through a temporary sibling and renames, so failures leave no partial file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write " + path.string());
        out << contents;
        if (!out) throw ConfigError("cannot write " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace flowfront::io
