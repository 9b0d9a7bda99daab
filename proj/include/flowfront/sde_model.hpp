#pragma once

// Coupled flow-front SDE over n parallel line sensors:
//
//     dY_i = ( C0_i / Y_i + D0 * (G Y)_i ) dt + sigma dW_i
//
// where G is a finite-difference approximation of the order-th spatial derivative
// across the sensor lines.

#include <algorithm>
#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "flowfront/error.hpp"

namespace flowfront::sde {

inline constexpr double kDefaultYMin = 1e-3;

/// Finite-difference derivative matrix across the sensor lines.
struct Stencil {
    int order = 4;
    int n = 0;
    double dx = 1.0;
    Eigen::MatrixXd G;  // 1/m^order
};

namespace detail {

// Binomial differences: (-1)^k C(order, k) evaluated left to right; palindromic.
inline std::vector<double> difference_weights(int order) {
    switch (order) {
        case 2: return {1.0, -2.0, 1.0};
        case 4: return {1.0, -4.0, 6.0, -4.0, 1.0};
        default: throw ConfigError("stencil: order must be 2 or 4");
    }
}

}  // namespace detail

/// Interior rows carry the central difference; rows within order/2 of an edge reuse
/// the difference window clamped against that edge, which is one-sided, of the same
/// derivative order, and mirror-symmetric between the two edges.
inline Stencil build_stencil(int n, int order, double dx) {
    const std::vector<double> weights = detail::difference_weights(order);
    if (n < order + 1) {
        std::ostringstream msg;
        msg << "stencil: " << n << " lines are too few for an order-" << order << " stencil";
        throw ConfigError(msg.str());
    }
    if (!(dx > 0.0)) throw ConfigError("stencil: dx must be positive");

    Stencil s;
    s.order = order;
    s.n = n;
    s.dx = dx;
    s.G = Eigen::MatrixXd::Zero(n, n);
    const double scale = 1.0 / std::pow(dx, order);
    const int half = order / 2;
    for (int i = 0; i < n; ++i) {
        const int start = std::clamp(i - half, 0, n - 1 - order);
        for (int k = 0; k <= order; ++k) s.G(i, start + k) = weights[k] * scale;
    }
    return s;
}

struct ModelParams {
    Eigen::VectorXd C0;  // m^2/s, one per line
    double D0 = 0.0;
    double sigma = 1e-3;   // m/sqrt(s)
    double s_meas = 1e-3;  // m

    int lines() const { return static_cast<int>(C0.size()); }

    void validate() const {
        if (C0.size() == 0) throw ConfigError("params: C0 must not be empty");
        if (!((C0.array() > 0.0).all())) throw ConfigError("params: C0 entries must be positive");
        if (!(sigma > 0.0)) throw ConfigError("params: sigma must be positive");
        if (!(s_meas > 0.0)) throw ConfigError("params: s_meas must be positive");
        if (!std::isfinite(D0)) throw ConfigError("params: D0 must be finite");
    }
};

struct ModelOptions {
    double y_min = kDefaultYMin;
};

template <class Vec>
Eigen::VectorXd drift(const Eigen::MatrixBase<Vec>& Y, const ModelParams& params,
                      const Stencil& stencil, const ModelOptions& options = {}) {
    Eigen::VectorXd f = params.D0 * (stencil.G * Y);
    for (Eigen::Index i = 0; i < Y.size(); ++i)
        f[i] += params.C0[i] / std::max(Y[i], options.y_min);
    return f;
}

/// df/dY. Lines sitting at the clamp floor contribute no reciprocal-term derivative.
template <class Vec>
Eigen::MatrixXd drift_jacobian(const Eigen::MatrixBase<Vec>& Y, const ModelParams& params,
                               const Stencil& stencil, const ModelOptions& options = {}) {
    Eigen::MatrixXd A = params.D0 * stencil.G;
    for (Eigen::Index i = 0; i < Y.size(); ++i)
        if (Y[i] > options.y_min) A(i, i) -= params.C0[i] / (Y[i] * Y[i]);
    return A;
}

/// Euler-Maruyama path of the coupled SDE, reported every `sample_interval`
/// (t = 0 included), together with observations carrying N(0, s_meas^2) noise.
struct SdePath {
    std::vector<double> times;
    std::vector<Eigen::VectorXd> states;
    std::vector<Eigen::VectorXd> observations;
};

inline SdePath simulate_sde(const Eigen::VectorXd& Y0, const ModelParams& params,
                            const Stencil& stencil, double dt, double sample_interval, double T,
                            std::uint64_t seed, const ModelOptions& options = {}) {
    if (!(dt > 0.0) || !(sample_interval >= dt) || !(T > 0.0))
        throw ConfigError("simulate_sde: need 0 < dt <= sample_interval and T > 0");
    const auto steps_per_sample = static_cast<long>(std::lround(sample_interval / dt));
    const auto samples = static_cast<long>(std::floor(T / sample_interval + 1e-9));

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double h = sample_interval / static_cast<double>(steps_per_sample);
    const double noise_scale = params.sigma * std::sqrt(h);

    SdePath path;
    Eigen::VectorXd Y = Y0.cwiseMax(options.y_min);
    auto record = [&](double t) {
        path.times.push_back(t);
        path.states.push_back(Y);
        Eigen::VectorXd z(Y.size());
        for (Eigen::Index i = 0; i < Y.size(); ++i) z[i] = Y[i] + params.s_meas * normal(rng);
        path.observations.push_back(std::move(z));
    };
    record(0.0);
    Eigen::VectorXd dW(Y.size());
    for (long k = 1; k <= samples; ++k) {
        for (long s = 0; s < steps_per_sample; ++s) {
            for (Eigen::Index i = 0; i < dW.size(); ++i) dW[i] = normal(rng);
            Y += h * drift(Y, params, stencil, options) + noise_scale * dW;
            Y = Y.cwiseMax(options.y_min);
        }
        record(static_cast<double>(k) * sample_interval);
    }
    return path;
}

}  // namespace flowfront::sde
