#pragma once

// Maximum-likelihood fitting of the flow-front SDE: minimize the filter's negative
// log-likelihood over (log C0_1..log C0_n, D0, log sigma, log s_meas) with a
// Nelder-Mead simplex search.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "flowfront/cdekf.hpp"
#include "flowfront/error.hpp"
#include "flowfront/sde_model.hpp"

namespace flowfront::mle {

inline constexpr double kPenalty = 1e12;

using ParamVector = Eigen::VectorXd;

inline ParamVector transform(const sde::ModelParams& params) {
    params.validate();
    const Eigen::Index n = params.C0.size();
    ParamVector v(n + 3);
    v.head(n) = params.C0.array().log().matrix();
    v[n] = params.D0;
    v[n + 1] = std::log(params.sigma);
    v[n + 2] = std::log(params.s_meas);
    return v;
}

inline sde::ModelParams untransform(const ParamVector& v) {
    if (v.size() < 4) throw ConfigError("untransform: parameter vector too short");
    const Eigen::Index n = v.size() - 3;
    sde::ModelParams params;
    params.C0 = v.head(n).array().exp().matrix();
    params.D0 = v[n];
    params.sigma = std::exp(v[n + 1]);
    params.s_meas = std::exp(v[n + 2]);
    return params;
}

struct NelderMeadOptions {
    int max_evaluations = 2000;
    double x_tolerance = 1e-6;
    double f_tolerance = 1e-6;
    double initial_step = 0.2;
};

struct NelderMeadResult {
    Eigen::VectorXd x;
    double value = std::numeric_limits<double>::infinity();
    int evaluations = 0;
    bool converged = false;
    std::vector<double> incumbents;  // best value after each iteration
};

/// Derivative-free simplex minimization with reflection 1, expansion 2,
/// contraction 0.5 and shrink 0.5. Converges when every vertex lies within
/// x_tolerance (max norm) of the best vertex and within f_tolerance in value.
inline NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& objective,
                                    const Eigen::VectorXd& x0,
                                    const NelderMeadOptions& options = {}) {
    const Eigen::Index dim = x0.size();
    NelderMeadResult result;

    std::vector<Eigen::VectorXd> simplex(static_cast<std::size_t>(dim + 1), x0);
    std::vector<double> values(static_cast<std::size_t>(dim + 1));
    auto eval = [&](const Eigen::VectorXd& x) {
        ++result.evaluations;
        const double f = objective(x);
        return std::isfinite(f) ? f : kPenalty;
    };

    for (Eigen::Index i = 0; i < dim; ++i) simplex[static_cast<std::size_t>(i + 1)][i] += options.initial_step;
    for (std::size_t i = 0; i < simplex.size(); ++i) values[i] = eval(simplex[i]);

    std::vector<std::size_t> order(simplex.size());
    auto sort_simplex = [&] {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
        std::vector<Eigen::VectorXd> s2;
        std::vector<double> v2;
        for (std::size_t k : order) {
            s2.push_back(simplex[k]);
            v2.push_back(values[k]);
        }
        simplex = std::move(s2);
        values = std::move(v2);
    };
    auto spread_ok = [&] {
        double dx = 0.0;
        double df = 0.0;
        for (std::size_t i = 1; i < simplex.size(); ++i) {
            dx = std::max(dx, (simplex[i] - simplex[0]).cwiseAbs().maxCoeff());
            df = std::max(df, std::abs(values[i] - values[0]));
        }
        return dx < options.x_tolerance && df < options.f_tolerance;
    };

    sort_simplex();
    const std::size_t worst = simplex.size() - 1;
    while (true) {
        if (spread_ok()) {
            result.converged = true;
            break;
        }
        if (result.evaluations >= options.max_evaluations) break;

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(dim);
        for (std::size_t i = 0; i < worst; ++i) centroid += simplex[i];
        centroid /= static_cast<double>(dim);

        const Eigen::VectorXd reflected = centroid + (centroid - simplex[worst]);
        const double f_reflected = eval(reflected);
        if (f_reflected < values[0]) {
            const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - simplex[worst]);
            const double f_expanded = eval(expanded);
            if (f_expanded < f_reflected) {
                simplex[worst] = expanded;
                values[worst] = f_expanded;
            } else {
                simplex[worst] = reflected;
                values[worst] = f_reflected;
            }
        } else if (f_reflected < values[worst - 1]) {
            simplex[worst] = reflected;
            values[worst] = f_reflected;
        } else {
            bool shrink = false;
            if (f_reflected < values[worst]) {
                const Eigen::VectorXd outside = centroid + 0.5 * (reflected - centroid);
                const double f_outside = eval(outside);
                if (f_outside <= f_reflected) {
                    simplex[worst] = outside;
                    values[worst] = f_outside;
                } else {
                    shrink = true;
                }
            } else {
                const Eigen::VectorXd inside = centroid + 0.5 * (simplex[worst] - centroid);
                const double f_inside = eval(inside);
                if (f_inside < values[worst]) {
                    simplex[worst] = inside;
                    values[worst] = f_inside;
                } else {
                    shrink = true;
                }
            }
            if (shrink) {
                for (std::size_t i = 1; i < simplex.size(); ++i) {
                    simplex[i] = simplex[0] + 0.5 * (simplex[i] - simplex[0]);
                    values[i] = eval(simplex[i]);
                }
            }
        }
        sort_simplex();
        result.incumbents.push_back(values[0]);
    }
    result.x = simplex[0];
    result.value = values[0];
    return result;
}

struct MleOptions {
    int multistart = 5;
    NelderMeadOptions simplex;
    std::uint64_t seed = 0;
    filter::FilterOptions filter;
    sde::ModelOptions model;
};

/// Total negative log-likelihood of the data under untransform(v). Any filter
/// failure or non-finite value maps to kPenalty.
inline double negloglik(const ParamVector& v, const std::vector<filter::ObservationFrame>& data,
                        const sde::Stencil& stencil, const filter::FilterOptions& filter_options = {},
                        const sde::ModelOptions& model_options = {}) {
    if (data.empty()) throw ConfigError("negloglik: no observation frames");
    try {
        const sde::ModelParams params = untransform(v);
        const filter::FlowFrontModel model(params, stencil, model_options);
        const double value = filter::filter_pass(data, model, filter_options).negloglik;
        return std::isfinite(value) ? value : kPenalty;
    } catch (const NumericalError&) {
        return kPenalty;
    }
}

struct FitResult {
    sde::ModelParams theta_hat;
    double negloglik = std::numeric_limits<double>::infinity();
    int evaluations = 0;
    bool converged = false;
    int start_index = 0;
    std::vector<double> incumbents;  // of the winning start
};

/// Natural size of D0 for a stencil: one unit corresponds to a coupling rate of
/// 0.01/s on the largest stencil weight. The simplex works in these units.
inline double coupling_scale(const sde::Stencil& stencil) {
    const double peak = stencil.G.cwiseAbs().maxCoeff();
    return peak > 0.0 ? 0.01 / peak : 1.0;
}

inline FitResult estimate(const std::vector<filter::ObservationFrame>& data,
                          const sde::Stencil& stencil, const sde::ModelParams& theta0,
                          const MleOptions& options = {}) {
    theta0.validate();
    if (theta0.lines() != stencil.n) throw ConfigError("estimate: theta0 does not match stencil");
    if (options.multistart < 1) throw ConfigError("mle: multistart must be at least 1");

    const Eigen::Index n = stencil.n;
    const double d_scale = coupling_scale(stencil);
    Eigen::VectorXd scale = Eigen::VectorXd::Ones(n + 3);
    scale[n] = d_scale;

    // A line with no observations carries no information on its own C0; it stays at
    // theta0 instead of drifting to wherever the latent state is most convenient.
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        if (std::any_of(data.begin(), data.end(), [&](const auto& f) { return f.mask[ui]; })) free.push_back(i);
    }
    for (Eigen::Index j = n; j < n + 3; ++j) free.push_back(j);
    const Eigen::VectorXd fixed = transform(theta0).cwiseQuotient(scale);
    auto expand = [&](const Eigen::VectorXd& r) {
        Eigen::VectorXd u = fixed;
        for (std::size_t j = 0; j < free.size(); ++j) u[free[j]] = r[static_cast<Eigen::Index>(j)];
        return u;
    };
    auto objective = [&](const Eigen::VectorXd& r) {
        return negloglik(expand(r).cwiseProduct(scale), data, stencil, options.filter, options.model);
    };

    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    FitResult best;
    bool any_converged = false;
    for (int start = 0; start < options.multistart; ++start) {
        sde::ModelParams init = theta0;
        if (start > 0) {
            for (Eigen::Index i = 0; i < n; ++i) init.C0[i] *= 1.0 + 0.5 * unit(rng);
            init.sigma *= 1.0 + 0.5 * unit(rng);
            init.s_meas *= 1.0 + 0.5 * unit(rng);
            init.D0 += unit(rng) * (std::abs(theta0.D0) + 0.1 * d_scale);
        }
        const Eigen::VectorXd u0 = transform(init).cwiseQuotient(scale);
        Eigen::VectorXd r0(static_cast<Eigen::Index>(free.size()));
        for (std::size_t j = 0; j < free.size(); ++j) r0[static_cast<Eigen::Index>(j)] = u0[free[j]];
        NelderMeadResult run = nelder_mead(objective, r0, options.simplex);
        best.evaluations += run.evaluations;
        any_converged = any_converged || run.converged;
        if (run.value < best.negloglik) {
            best.negloglik = run.value;
            best.theta_hat = untransform(expand(run.x).cwiseProduct(scale));
            for (Eigen::Index i = 0; i < n; ++i)
                if (std::find(free.begin(), free.end(), i) == free.end()) best.theta_hat.C0[i] = theta0.C0[i];
            best.start_index = start;
            best.incumbents = std::move(run.incumbents);
        }
    }
    best.converged = any_converged;
    return best;
}

/// Data-driven starting point: C0_i from the slope of z_i^2 against t, noise
/// levels from the scatter of increments around that drift, D0 = 0.
inline sde::ModelParams initial_params(const std::vector<filter::ObservationFrame>& data,
                                       double y_min = sde::kDefaultYMin) {
    if (data.empty()) throw ConfigError("initial_params: no observation frames");
    const Eigen::Index n = data.front().z.size();
    sde::ModelParams params;
    params.C0.resize(n);

    const double fallback_c0 = 1e-4;
    std::vector<bool> fitted(static_cast<std::size_t>(n), false);
    for (Eigen::Index i = 0; i < n; ++i) {
        double st = 0, sy = 0, stt = 0, sty = 0, count = 0;
        for (const auto& f : data) {
            if (!f.mask[static_cast<std::size_t>(i)]) continue;
            const double y = f.z[i] * f.z[i];
            st += f.t;
            sy += y;
            stt += f.t * f.t;
            sty += f.t * y;
            count += 1;
        }
        const double denom = count * stt - st * st;
        const double c = (count >= 2 && denom > 0.0) ? 0.5 * (count * sty - st * sy) / denom : 0.0;
        fitted[static_cast<std::size_t>(i)] = std::isfinite(c) && c > 1e-8;
        params.C0[i] = fitted[static_cast<std::size_t>(i)] ? c : fallback_c0;
    }
    // Lines without usable data take the rate interpolated linearly (in line index)
    // between the nearest fitted neighbours; past the last fitted line, the nearest one.
    std::vector<Eigen::Index> known;
    for (Eigen::Index i = 0; i < n; ++i)
        if (fitted[static_cast<std::size_t>(i)]) known.push_back(i);
    if (!known.empty()) {
        for (Eigen::Index i = 0; i < n; ++i) {
            if (fitted[static_cast<std::size_t>(i)]) continue;
            const auto hi = std::lower_bound(known.begin(), known.end(), i);
            if (hi == known.begin()) {
                params.C0[i] = params.C0[known.front()];
            } else if (hi == known.end()) {
                params.C0[i] = params.C0[known.back()];
            } else {
                const Eigen::Index a = *(hi - 1), b = *hi;
                const double w = static_cast<double>(i - a) / static_cast<double>(b - a);
                params.C0[i] = (1.0 - w) * params.C0[a] + w * params.C0[b];
            }
        }
    }

    // Increment scatter around the drift: var(d) = sigma^2 dt + 2 s^2, split evenly.
    // Medians keep the stiff first interval from dominating.
    std::vector<double> sq, sq_rate;
    for (std::size_t k = 1; k < data.size(); ++k) {
        const double dt = data[k].t - data[k - 1].t;
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto ui = static_cast<std::size_t>(i);
            if (!data[k].mask[ui] || !data[k - 1].mask[ui]) continue;
            const double y = std::max(data[k - 1].z[i], y_min);
            const double d = data[k].z[i] - data[k - 1].z[i] - params.C0[i] / y * dt;
            sq.push_back(d * d);
            sq_rate.push_back(d * d / dt);
        }
    }
    auto median = [](std::vector<double> v) {
        std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
        return v[v.size() / 2];
    };
    constexpr double kChiSquareMedian = 0.4549364;  // median of chi^2 with 1 dof
    params.sigma = sq.empty() ? 1e-3 : std::sqrt(0.5 * median(sq_rate) / kChiSquareMedian);
    params.s_meas = sq.empty() ? 1e-3 : std::sqrt(0.25 * median(sq) / kChiSquareMedian);
    params.sigma = std::clamp(params.sigma, 1e-5, 1.0);
    params.s_meas = std::clamp(params.s_meas, 1e-5, 1.0);
    params.D0 = 0.0;
    return params;
}

}  // namespace flowfront::mle
