#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "flowfront/mle.hpp"

using namespace flowfront;
using namespace flowfront::mle;

namespace {

struct Synthetic {
    sde::Stencil stencil;
    sde::ModelParams truth;
    std::vector<filter::ObservationFrame> frames;
};

Synthetic synthetic(int n, double T, std::uint64_t seed) {
    Synthetic s;
    s.stencil = sde::build_stencil(n, 4, 0.8 / (n - 1));
    s.truth.C0.resize(n);
    for (int i = 0; i < n; ++i) s.truth.C0[i] = 6e-4 * (1.0 + 0.2 * std::cos(2.0 * M_PI * i / (n - 1)));
    s.truth.D0 = -0.5 * coupling_scale(s.stencil);
    s.truth.sigma = 2e-3;
    s.truth.s_meas = 2e-3;
    const sde::SdePath path =
        sde::simulate_sde(Eigen::VectorXd::Constant(n, 0.05), s.truth, s.stencil, 0.01, 1.0, T, seed);
    for (std::size_t k = 0; k < path.times.size(); ++k)
        s.frames.push_back(filter::ObservationFrame::full(path.times[k], path.observations[k]));
    return s;
}

}  // namespace

TEST(Transform, KnownValuesAndRoundTrip) {
    sde::ModelParams p;
    p.C0 = Eigen::VectorXd::Ones(3);
    p.D0 = -0.3;
    p.sigma = 1.0;
    p.s_meas = 1.0;
    const ParamVector v = transform(p);
    EXPECT_EQ(v.head(3), Eigen::VectorXd::Zero(3));
    EXPECT_EQ(v[3], -0.3);

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-8.0, 2.0);
    for (int trial = 0; trial < 100; ++trial) {
        ParamVector w(7);
        for (int i = 0; i < 7; ++i) w[i] = u(rng);
        const sde::ModelParams q = untransform(w);
        EXPECT_TRUE((q.C0.array() > 0).all());
        EXPECT_GT(q.sigma, 0.0);
        EXPECT_GT(q.s_meas, 0.0);
        const ParamVector back = transform(q);
        EXPECT_LT((back - w).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(NelderMead, FindsQuadraticMinimum) {
    Eigen::VectorXd target(4);
    target << 1.0, -2.0, 0.5, 3.0;
    auto f = [&](const Eigen::VectorXd& x) {
        const Eigen::VectorXd d = x - target;
        return d.dot(Eigen::Vector4d(1, 2, 3, 4).asDiagonal() * d);
    };
    NelderMeadOptions opts;
    opts.x_tolerance = 1e-8;
    opts.f_tolerance = 1e-12;
    opts.max_evaluations = 5000;
    const NelderMeadResult r = nelder_mead(f, Eigen::VectorXd::Zero(4), opts);
    EXPECT_TRUE(r.converged);
    EXPECT_LT((r.x - target).cwiseAbs().maxCoeff(), 1e-4);
    for (std::size_t k = 1; k < r.incumbents.size(); ++k) EXPECT_LE(r.incumbents[k], r.incumbents[k - 1]);
}

TEST(NelderMead, NonFiniteValuesArePenalized) {
    auto f = [](const Eigen::VectorXd& x) {
        return x[0] < 0 ? std::numeric_limits<double>::quiet_NaN() : (x[0] - 1) * (x[0] - 1);
    };
    const NelderMeadResult r = nelder_mead(f, Eigen::VectorXd::Constant(1, 0.1));
    EXPECT_NEAR(r.x[0], 1.0, 1e-3);
}

TEST(NelderMead, StopsAtEvaluationBudget) {
    auto f = [](const Eigen::VectorXd& x) { return x.squaredNorm(); };
    NelderMeadOptions opts;
    opts.max_evaluations = 30;
    const NelderMeadResult r = nelder_mead(f, Eigen::VectorXd::Constant(5, 3.0), opts);
    EXPECT_FALSE(r.converged);
    EXPECT_LE(r.evaluations, 30 + 6);
}

TEST(NegLogLik, DeterministicAndSensitiveToSigma) {
    const Synthetic s = synthetic(5, 200.0, 3);
    const ParamVector v = transform(s.truth);
    const double a = negloglik(v, s.frames, s.stencil);
    EXPECT_EQ(a, negloglik(v, s.frames, s.stencil));
    sde::ModelParams loud = s.truth;
    loud.sigma *= 10.0;
    EXPECT_LT(a, negloglik(transform(loud), s.frames, s.stencil));
}

TEST(NegLogLik, EmptyMasksGiveZero) {
    Synthetic s = synthetic(5, 50.0, 4);
    for (auto& f : s.frames) std::fill(f.mask.begin(), f.mask.end(), false);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
        ParamVector v = transform(s.truth);
        for (Eigen::Index i = 0; i < v.size(); ++i) v[i] += 0.3 * g(rng);
        v[s.truth.C0.size()] = s.truth.D0 + 0.3 * g(rng) * coupling_scale(s.stencil);  // raw D0 is not log-scaled
        EXPECT_EQ(negloglik(v, s.frames, s.stencil), 0.0);
    }
}

TEST(NegLogLik, FailuresMapToPenalty) {
    const Synthetic s = synthetic(5, 50.0, 5);
    ParamVector v = transform(s.truth);
    v[5] = 1e6;  // D0 far into the anti-diffusive range
    EXPECT_EQ(negloglik(v, s.frames, s.stencil), kPenalty);
}

TEST(InitialParams, RoughlyRecoverScales) {
    const Synthetic s = synthetic(6, 400.0, 6);
    const sde::ModelParams p = initial_params(s.frames);
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(p.C0[i] / s.truth.C0[i], 1.0, 0.5);
    EXPECT_GT(p.sigma, 0.0);
    EXPECT_GT(p.s_meas, 0.0);
    EXPECT_EQ(p.D0, 0.0);
}

TEST(InitialParams, UnobservedLineBorrowsFromOthers) {
    Synthetic s = synthetic(6, 200.0, 7);
    for (auto& f : s.frames) f.mask[2] = false;
    const sde::ModelParams p = initial_params(s.frames);
    EXPECT_DOUBLE_EQ(p.C0[2], 0.5 * (p.C0[1] + p.C0[3]));

    for (auto& f : s.frames) f.mask[0] = f.mask[5] = false;
    const sde::ModelParams q = initial_params(s.frames);
    EXPECT_EQ(q.C0[0], q.C0[1]);
    EXPECT_EQ(q.C0[5], q.C0[4]);
    EXPECT_DOUBLE_EQ(q.C0[2], 0.5 * (q.C0[1] + q.C0[3]));
}

TEST(Estimate, ImprovesOnStartAndIsDeterministic) {
    const Synthetic s = synthetic(5, 200.0, 8);
    const sde::ModelParams start = initial_params(s.frames);
    MleOptions opts;
    opts.multistart = 2;
    opts.seed = 99;
    opts.simplex.max_evaluations = 600;
    const FitResult a = estimate(s.frames, s.stencil, start, opts);
    const FitResult b = estimate(s.frames, s.stencil, start, opts);
    EXPECT_EQ(a.negloglik, b.negloglik);
    EXPECT_EQ(transform(a.theta_hat), transform(b.theta_hat));
    EXPECT_LE(a.negloglik, negloglik(transform(start), s.frames, s.stencil));
    EXPECT_TRUE((a.theta_hat.C0.array() > 0).all());
    for (std::size_t k = 1; k < a.incumbents.size(); ++k) EXPECT_LE(a.incumbents[k], a.incumbents[k - 1]);
}

TEST(Estimate, RescaledDataFitIsNoWorseThanRescaledOptimum) {
    const Synthetic s = synthetic(5, 200.0, 9);
    MleOptions opts;
    opts.multistart = 1;
    opts.simplex.max_evaluations = 600;
    const FitResult fit = estimate(s.frames, s.stencil, initial_params(s.frames), opts);

    const double c = 1.5;
    std::vector<filter::ObservationFrame> scaled = s.frames;
    for (auto& f : scaled) f.z *= c;
    sde::ModelParams naive = fit.theta_hat;
    naive.C0 *= c * c;
    naive.sigma *= c;
    naive.s_meas *= c;
    const double naive_value = negloglik(transform(naive), scaled, s.stencil);
    const FitResult refit = estimate(scaled, s.stencil, naive, opts);
    EXPECT_LE(refit.negloglik, naive_value);
    EXPECT_GT(refit.theta_hat.s_meas, fit.theta_hat.s_meas);
}

TEST(Estimate, RejectsMismatchedStart) {
    const Synthetic s = synthetic(5, 20.0, 10);
    sde::ModelParams p = s.truth;
    p.C0 = Eigen::VectorXd::Constant(4, 1e-4);
    EXPECT_THROW(estimate(s.frames, s.stencil, p), ConfigError);
}

TEST(Estimate, NeverObservedLineKeepsItsStartingRate) {
    Synthetic s = synthetic(5, 150.0, 11);
    for (auto& f : s.frames) f.mask[2] = false;
    const sde::ModelParams start = initial_params(s.frames);
    MleOptions opts;
    opts.multistart = 2;
    opts.simplex.max_evaluations = 600;
    const FitResult fit = estimate(s.frames, s.stencil, start, opts);
    EXPECT_EQ(fit.theta_hat.C0[2], start.C0[2]);
    EXPECT_NE(fit.theta_hat.C0[1], start.C0[1]);
    EXPECT_LE(fit.negloglik, negloglik(transform(start), s.frames, s.stencil));
}
