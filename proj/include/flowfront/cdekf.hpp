#pragma once

// Continuous-discrete extended Kalman filter with missing-data updates.
//
// Between observations the mean and covariance follow
//     dY/dt = f(Y),   dP/dt = A P + P A^T + sigma^2 I,   A = df/dY,
// integrated with classical RK4. At an observation only the valid sensor entries
// are used: with the row-selected identity Psel,
//     eps = Psel z - Psel Y,   R = Psel P Psel^T + s^2 I,   K = P Psel^T R^-1,
// and the likelihood contribution uses the reduced dimension count(mask).

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "flowfront/error.hpp"
#include "flowfront/sde_model.hpp"

namespace flowfront::filter {

struct ObservationFrame {
    double t = 0.0;
    Eigen::VectorXd z;
    std::vector<bool> mask;  // true = valid

    int effective_dimension() const {
        return static_cast<int>(std::count(mask.begin(), mask.end(), true));
    }

    static ObservationFrame full(double t, Eigen::VectorXd z) {
        ObservationFrame frame;
        frame.t = t;
        frame.mask.assign(static_cast<std::size_t>(z.size()), true);
        frame.z = std::move(z);
        return frame;
    }
};

struct FilterState {
    Eigen::VectorXd mean;
    Eigen::MatrixXd P;
    double t = 0.0;
};

struct StepResult {
    Eigen::VectorXd prediction;  // one-step-ahead mean at the frame time, before update
    Eigen::VectorXd innovation;
    Eigen::MatrixXd innovation_cov;
    double negloglik = 0.0;
    FilterState state;  // after update
};

struct FilterOptions {
    double Ps = 10.0;
    /// Largest RK4 step. Zero selects min(dt, substep_fraction * median frame spacing).
    double substep = 0.0;
    double substep_fraction = 1.0;
    /// Upper bound on h * ||A||_inf; shrinks steps where the drift is stiff.
    double max_step_norm = 0.5;
    std::optional<Eigen::VectorXd> initial_mean;
};

/// Drift model of the flow-front SDE in the form the filter consumes.
class FlowFrontModel {
public:
    FlowFrontModel(const sde::ModelParams& params, const sde::Stencil& stencil,
                   sde::ModelOptions options = {})
        : params_(params), stencil_(stencil), options_(options) {
        if (params.lines() != stencil.n)
            throw ConfigError("model: C0 length does not match the stencil line count");
    }

    int dimension() const { return stencil_.n; }
    double floor() const { return options_.y_min; }
    double diffusion() const { return params_.sigma; }
    double measurement_std() const { return params_.s_meas; }

    template <class Vec>
    Eigen::VectorXd drift(const Eigen::MatrixBase<Vec>& Y) const {
        return sde::drift(Y, params_, stencil_, options_);
    }
    template <class Vec>
    Eigen::MatrixXd jacobian(const Eigen::MatrixBase<Vec>& Y) const {
        return sde::drift_jacobian(Y, params_, stencil_, options_);
    }

    /// Infinity-norm bound on the Jacobian that keeps the reciprocal term of
    /// clamped lines, so step control sees their stiffness.
    template <class Vec>
    double stiffness(const Eigen::MatrixBase<Vec>& Y) const {
        double out = 0.0;
        for (Eigen::Index i = 0; i < Y.size(); ++i) {
            const double y = std::max(Y[i], options_.y_min);
            const double row = std::abs(params_.D0) * stencil_.G.row(i).cwiseAbs().sum() +
                               params_.C0[i] / (y * y);
            out = std::max(out, row);
        }
        return out;
    }

private:
    const sde::ModelParams& params_;
    const sde::Stencil& stencil_;
    sde::ModelOptions options_;
};

/// dY = F Y dt + sigma dW. Used for closed-form checks of the filter.
class LinearDriftModel {
public:
    LinearDriftModel(Eigen::MatrixXd F, double sigma, double s_meas)
        : F_(std::move(F)), sigma_(sigma), s_meas_(s_meas) {}

    int dimension() const { return static_cast<int>(F_.rows()); }
    double floor() const { return -std::numeric_limits<double>::infinity(); }
    double diffusion() const { return sigma_; }
    double measurement_std() const { return s_meas_; }

    template <class Vec>
    Eigen::VectorXd drift(const Eigen::MatrixBase<Vec>& Y) const { return F_ * Y; }
    template <class Vec>
    Eigen::MatrixXd jacobian(const Eigen::MatrixBase<Vec>&) const { return F_; }
    template <class Vec>
    double stiffness(const Eigen::MatrixBase<Vec>&) const {
        return F_.cwiseAbs().rowwise().sum().maxCoeff();
    }

private:
    Eigen::MatrixXd F_;
    double sigma_;
    double s_meas_;
};

inline void symmetrize(Eigen::MatrixXd& P) {
    P = 0.5 * (P + P.transpose()).eval();
}

// Round-off can push a variance slightly negative; zero that line's row and column.
inline void repair_covariance(Eigen::MatrixXd& P) {
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
        if (P(i, i) < 0.0) {
            P.row(i).setZero();
            P.col(i).setZero();
        }
    }
}

/// Ps * integral_0^dt1 exp(A s) sigma^2 exp(A s)^T ds. The Van Loan block exponential
/// is evaluated on dt1 / 2^k with ||A|| dt1 / 2^k <= 1/2, then doubled k times via
///     Phi(2h) = Phi(h)^2,   Q(2h) = Q(h) + Phi(h) Q(h) Phi(h)^T,
/// which stays finite for stiff A where the direct block exponential overflows.
inline Eigen::MatrixXd initial_covariance(const Eigen::MatrixXd& A, double sigma, double dt1,
                                          double Ps) {
    if (!(Ps >= 1.0)) throw ConfigError("filter: Ps must be at least 1");
    if (!(dt1 > 0.0)) throw ConfigError("filter: first sampling interval must be positive");
    if (!A.allFinite()) throw NumericalError("filter: non-finite drift Jacobian");
    const Eigen::Index n = A.rows();

    const double a_norm = A.cwiseAbs().rowwise().sum().maxCoeff();
    int doublings = 0;
    double h = dt1;
    while (a_norm * h > 0.5 && doublings < 60) {
        h *= 0.5;
        ++doublings;
    }

    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    M.topLeftCorner(n, n) = -A;
    M.topRightCorner(n, n) = sigma * sigma * Eigen::MatrixXd::Identity(n, n);
    M.bottomRightCorner(n, n) = A.transpose();
    const Eigen::MatrixXd E = (M * h).exp();
    Eigen::MatrixXd Phi = E.bottomRightCorner(n, n).transpose();
    Eigen::MatrixXd Q = Phi * E.topRightCorner(n, n);
    symmetrize(Q);
    for (int k = 0; k < doublings; ++k) {
        Q += Phi * Q * Phi.transpose();
        symmetrize(Q);
        Phi = (Phi * Phi).eval();
    }
    return Ps * Q;
}

template <class Model>
Eigen::MatrixXd initial_covariance(const Model& model, const Eigen::VectorXd& Y0, double dt1,
                                   double Ps) {
    return initial_covariance(model.jacobian(Y0), model.diffusion(), dt1, Ps);
}

/// Propagates mean and covariance from state.t to t_next in RK4 steps no longer
/// than `substep` (and shorter where h * ||A||_inf would exceed max_step_norm).
template <class Model>
FilterState predict(const FilterState& state, const Model& model, double t_next, double substep,
                    double max_step_norm = 0.5) {
    if (t_next < state.t) throw ConfigError("predict: t_next precedes the state time");
    if (!(substep > 0.0)) throw ConfigError("predict: substep must be positive");

    const Eigen::Index n = state.mean.size();
    const double q = model.diffusion() * model.diffusion();
    const double floor = model.floor();

    FilterState out = state;
    Eigen::VectorXd& Y = out.mean;
    Eigen::MatrixXd& P = out.P;

    auto rhs = [&](const Eigen::VectorXd& y, const Eigen::MatrixXd& p, Eigen::VectorXd& dy,
                   Eigen::MatrixXd& dp) {
        const Eigen::VectorXd yc = y.cwiseMax(floor);
        dy = model.drift(yc);
        const Eigen::MatrixXd A = model.jacobian(yc);
        dp.noalias() = A * p;
        dp += dp.transpose().eval();
        dp.diagonal().array() += q;
    };

    Eigen::VectorXd k1y(n), k2y(n), k3y(n), k4y(n);
    Eigen::MatrixXd k1p(n, n), k2p(n, n), k3p(n, n), k4p(n, n);
    const double eps = 1e-12 * std::max(1.0, std::abs(t_next));
    long step = 0;
    while (out.t < t_next - eps) {
        double h = std::min(substep, t_next - out.t);
        if (max_step_norm > 0.0) {
            const double a_norm = model.stiffness(Y);
            if (a_norm * h > max_step_norm) h = max_step_norm / a_norm;
        }
        rhs(Y, P, k1y, k1p);
        rhs(Y + 0.5 * h * k1y, P + 0.5 * h * k1p, k2y, k2p);
        rhs(Y + 0.5 * h * k2y, P + 0.5 * h * k2p, k3y, k3p);
        rhs(Y + h * k3y, P + h * k3p, k4y, k4p);
        Y += (h / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
        P += (h / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        Y = Y.cwiseMax(floor);
        symmetrize(P);
        out.t += h;
        ++step;
        if (!Y.allFinite() || !P.allFinite()) {
            std::ostringstream msg;
            msg << "predict: non-finite state at substep " << step << " (t = " << out.t << ")";
            throw NumericalError(msg.str());
        }
    }
    out.t = std::max(out.t, t_next);
    return out;
}

/// Measurement update with per-sensor noise variances `meas_var`.
inline StepResult update(const FilterState& state, const ObservationFrame& frame,
                         const Eigen::VectorXd& meas_var) {
    const Eigen::Index n = state.mean.size();
    if (frame.z.size() != n || static_cast<Eigen::Index>(frame.mask.size()) != n)
        throw ConfigError("update: observation size does not match the state");

    StepResult out;
    out.prediction = state.mean;
    out.state = state;
    out.state.t = frame.t;

    std::vector<Eigen::Index> valid;
    valid.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
        if (frame.mask[static_cast<std::size_t>(i)]) valid.push_back(i);
    const auto dim = static_cast<Eigen::Index>(valid.size());
    if (dim == 0) return out;

    out.innovation = frame.z(valid) - state.mean(valid);
    out.innovation_cov = state.P(valid, valid);
    out.innovation_cov.diagonal() += meas_var(valid);

    const Eigen::LLT<Eigen::MatrixXd> llt(out.innovation_cov);
    if (llt.info() != Eigen::Success)
        throw NumericalError("update: innovation covariance is not positive definite");

    const Eigen::MatrixXd PHt = state.P(Eigen::all, valid);
    const Eigen::MatrixXd K = llt.solve(PHt.transpose()).transpose();
    out.state.mean += K * out.innovation;
    out.state.P -= K * out.innovation_cov * K.transpose();
    symmetrize(out.state.P);
    repair_covariance(out.state.P);

    const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const double mahalanobis = out.innovation.dot(llt.solve(out.innovation));
    out.negloglik =
        0.5 * (mahalanobis + log_det + static_cast<double>(dim) * std::log(2.0 * std::numbers::pi));
    return out;
}

template <class Model>
    requires requires(const Model& m) { m.measurement_std(); }
StepResult update(const FilterState& state, const ObservationFrame& frame, const Model& model) {
    const double s = model.measurement_std();
    const Eigen::VectorXd meas_var = Eigen::VectorXd::Constant(state.mean.size(), s * s);
    return update(state, frame, meas_var);
}

struct FilterResult {
    double negloglik = 0.0;
    Eigen::VectorXd initial_mean;
    std::vector<StepResult> steps;  // one per frame after the first
};

/// Fills masked entries of the first frame by linear interpolation over valid
/// neighbours (flat beyond the outermost valid ones). All-masked gives the floor.
inline Eigen::VectorXd initial_mean_from_frame(const ObservationFrame& frame, double floor) {
    const Eigen::Index n = frame.z.size();
    std::vector<Eigen::Index> valid;
    for (Eigen::Index i = 0; i < n; ++i)
        if (frame.mask[static_cast<std::size_t>(i)]) valid.push_back(i);

    Eigen::VectorXd Y(n);
    if (valid.empty()) {
        Y.setConstant(std::max(floor, sde::kDefaultYMin));
        return Y;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        if (i <= valid.front()) {
            Y[i] = frame.z[valid.front()];
        } else if (i >= valid.back()) {
            Y[i] = frame.z[valid.back()];
        } else {
            const auto hi = std::lower_bound(valid.begin(), valid.end(), i);
            const Eigen::Index b = *hi;
            const Eigen::Index a = *(hi - 1);
            if (b == i) {
                Y[i] = frame.z[i];
            } else {
                const double w = static_cast<double>(i - a) / static_cast<double>(b - a);
                Y[i] = (1.0 - w) * frame.z[a] + w * frame.z[b];
            }
        }
    }
    return Y.cwiseMax(floor);
}

inline double default_substep(const std::vector<ObservationFrame>& frames, double fraction) {
    std::vector<double> gaps;
    for (std::size_t k = 1; k < frames.size(); ++k) gaps.push_back(frames[k].t - frames[k - 1].t);
    if (gaps.empty()) return 1.0;
    std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
    return fraction * gaps[gaps.size() / 2];
}

/// Runs the filter over all frames. The first frame conditions the initial mean
/// (unless one is supplied) and contributes nothing to the likelihood.
template <class Model>
FilterResult filter_pass(const std::vector<ObservationFrame>& frames, const Model& model,
                         const FilterOptions& options = {}) {
    if (frames.empty()) throw ConfigError("filter: no observation frames");
    for (std::size_t k = 1; k < frames.size(); ++k)
        if (!(frames[k].t > frames[k - 1].t))
            throw ConfigError("filter: frame times must be strictly increasing");

    FilterResult result;
    FilterState state;
    state.t = frames.front().t;
    state.mean = options.initial_mean ? options.initial_mean->cwiseMax(model.floor())
                                      : initial_mean_from_frame(frames.front(), model.floor());
    result.initial_mean = state.mean;
    if (frames.size() == 1) return result;

    state.P = initial_covariance(model, state.mean, frames[1].t - frames[0].t, options.Ps);
    const double substep = options.substep > 0.0
                               ? options.substep
                               : default_substep(frames, options.substep_fraction);

    result.steps.reserve(frames.size() - 1);
    const double s = model.measurement_std();
    const Eigen::VectorXd meas_var = Eigen::VectorXd::Constant(state.mean.size(), s * s);
    for (std::size_t k = 1; k < frames.size(); ++k) {
        const double h = std::min(substep, frames[k].t - state.t);
        state = predict(state, model, frames[k].t, h, options.max_step_norm);
        StepResult step = update(state, frames[k], meas_var);
        result.negloglik += step.negloglik;
        state = step.state;
        result.steps.push_back(std::move(step));
    }
    return result;
}

}  // namespace flowfront::filter
