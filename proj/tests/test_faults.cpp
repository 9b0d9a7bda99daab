#include <gtest/gtest.h>

#include "flowfront/faults.hpp"

using namespace flowfront;
using namespace flowfront::faults;

namespace {

std::vector<filter::ObservationFrame> clean(int frames, int lines) {
    std::vector<filter::ObservationFrame> out;
    for (int k = 0; k < frames; ++k)
        out.push_back(filter::ObservationFrame::full(k, Eigen::VectorXd::LinSpaced(lines, 0.1, 0.1 * lines) + Eigen::VectorXd::Constant(lines, 1e-3 * k)));
    return out;
}

int masked(const std::vector<filter::ObservationFrame>& frames, int line) {
    int count = 0;
    for (const auto& f : frames) count += f.mask[static_cast<std::size_t>(line)] ? 0 : 1;
    return count;
}

void expect_untouched(const std::vector<filter::ObservationFrame>& a,
                      const std::vector<filter::ObservationFrame>& b, const std::vector<int>& listed) {
    for (std::size_t k = 0; k < a.size(); ++k)
        for (int l = 0; l < a[k].z.size(); ++l) {
            if (std::find(listed.begin(), listed.end(), l) != listed.end()) continue;
            EXPECT_EQ(a[k].z[l], b[k].z[l]);
            EXPECT_EQ(a[k].mask[static_cast<std::size_t>(l)], b[k].mask[static_cast<std::size_t>(l)]);
        }
}

}  // namespace

TEST(Faults, KindNames) {
    for (FaultKind k : {FaultKind::none, FaultKind::drop_sensor, FaultKind::partial_dropout, FaultKind::bias})
        EXPECT_EQ(parse_kind(to_string(k)), k);
    EXPECT_THROW(parse_kind("stuck"), ConfigError);
}

TEST(Faults, DropSensor) {
    const auto data = clean(600, 8);
    FaultScenario s;
    s.kind = FaultKind::drop_sensor;
    s.sensors = {3};
    const auto out = apply_scenario(data, s);
    EXPECT_EQ(masked(out, 3), 600);
    expect_untouched(data, out, {3});
    for (const auto& f : data) EXPECT_EQ(f.effective_dimension(), 8);
}

TEST(Faults, PartialDropoutExactCounts) {
    const auto data = clean(600, 8);
    FaultScenario s;
    s.kind = FaultKind::partial_dropout;
    s.sensors = {3, 5, 7};
    s.fraction = 0.7;
    s.seed = 11;
    const auto out = apply_scenario(data, s);
    for (int l : {3, 5, 7}) EXPECT_EQ(masked(out, l), 420);
    expect_untouched(data, out, {3, 5, 7});
}

TEST(Faults, BiasExactCounts) {
    const auto data = clean(600, 8);
    FaultScenario s;
    s.kind = FaultKind::bias;
    s.sensors = {3};
    s.fraction = 0.5;
    s.bias = 0.2;
    s.seed = 5;
    const auto out = apply_scenario(data, s);
    int shifted = 0;
    for (std::size_t k = 0; k < out.size(); ++k) {
        EXPECT_TRUE(out[k].mask[3]);
        const double d = out[k].z[3] - data[k].z[3];
        if (d != 0.0) {
            EXPECT_NEAR(d, 0.2, 1e-15);
            ++shifted;
        }
    }
    EXPECT_EQ(shifted, 300);
    expect_untouched(data, out, {3});
}

TEST(Faults, FractionZeroAndNoneAreIdentity) {
    const auto data = clean(50, 5);
    FaultScenario s;
    s.kind = FaultKind::partial_dropout;
    s.sensors = {1, 2};
    const auto out = apply_scenario(data, s);
    expect_untouched(data, out, {});
    FaultScenario none;
    expect_untouched(data, apply_scenario(data, none), {});
}

TEST(Faults, SeedDeterminism) {
    const auto data = clean(200, 6);
    FaultScenario s;
    s.kind = FaultKind::partial_dropout;
    s.sensors = {0, 4};
    s.fraction = 0.35;
    s.seed = 1;
    const auto a = apply_scenario(data, s);
    const auto b = apply_scenario(data, s);
    s.seed = 2;
    const auto c = apply_scenario(data, s);
    bool differs = false;
    for (std::size_t k = 0; k < a.size(); ++k) {
        EXPECT_EQ(a[k].mask, b[k].mask);
        differs = differs || a[k].mask != c[k].mask;
    }
    EXPECT_TRUE(differs);
    for (int l : {0, 4}) {
        EXPECT_EQ(masked(a, l), 70);
        EXPECT_EQ(masked(c, l), 70);
    }
}

TEST(Faults, ExactCountsAcrossFractions) {
    std::mt19937_64 rng(3);
    for (std::size_t count : {1u, 7u, 100u, 601u})
        for (double fraction : {0.0, 0.1, 0.33, 0.5, 0.999, 1.0}) {
            const auto picks = sample_without_replacement(count, fraction, rng);
            EXPECT_EQ(picks.size(), static_cast<std::size_t>(std::floor(fraction * count)));
            std::vector<std::size_t> sorted = picks;
            std::sort(sorted.begin(), sorted.end());
            EXPECT_EQ(std::adjacent_find(sorted.begin(), sorted.end()), sorted.end());
            for (std::size_t p : picks) EXPECT_LT(p, count);
        }
}

TEST(Faults, Validation) {
    const auto data = clean(10, 4);
    FaultScenario s;
    s.kind = FaultKind::drop_sensor;
    s.sensors = {4};
    EXPECT_THROW(apply_scenario(data, s), ConfigError);
    s.sensors = {-1};
    EXPECT_THROW(apply_scenario(data, s), ConfigError);
    s.kind = FaultKind::bias;
    s.sensors = {1};
    s.fraction = 1.5;
    EXPECT_THROW(apply_scenario(data, s), ConfigError);
}
