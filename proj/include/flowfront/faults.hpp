#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "flowfront/cdekf.hpp"
#include "flowfront/error.hpp"

namespace flowfront::faults {

enum class FaultKind { none, drop_sensor, partial_dropout, bias };

inline std::string_view to_string(FaultKind kind) {
    switch (kind) {
        case FaultKind::none: return "none";
        case FaultKind::drop_sensor: return "drop_sensor";
        case FaultKind::partial_dropout: return "partial_dropout";
        case FaultKind::bias: return "bias";
    }
    return "none";
}

inline FaultKind parse_kind(std::string_view name) {
    if (name == "none") return FaultKind::none;
    if (name == "drop_sensor") return FaultKind::drop_sensor;
    if (name == "partial_dropout") return FaultKind::partial_dropout;
    if (name == "bias") return FaultKind::bias;
    throw ConfigError("scenario: unknown kind '" + std::string(name) + "'");
}

struct FaultScenario {
    FaultKind kind = FaultKind::none;
    std::vector<int> sensors;
    double fraction = 0.0;
    double bias = 0.0;  // m
    std::uint64_t seed = 0;
};

/// Exactly floor(fraction * count) distinct indices in [0, count), by a seeded
/// partial Fisher-Yates shuffle.
inline std::vector<std::size_t> sample_without_replacement(std::size_t count, double fraction,
                                                           std::mt19937_64& rng) {
    const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(count)));
    std::vector<std::size_t> pool(count);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, count - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(k);
    return pool;
}

inline std::vector<filter::ObservationFrame> apply_scenario(
    const std::vector<filter::ObservationFrame>& frames, const FaultScenario& scenario) {
    std::vector<filter::ObservationFrame> out = frames;
    if (scenario.kind == FaultKind::none || frames.empty()) return out;

    const auto n = frames.front().z.size();
    for (int s : scenario.sensors) {
        if (s < 0 || s >= n) {
            std::ostringstream msg;
            msg << "scenario: sensor index " << s << " outside [0, " << n << ")";
            throw ConfigError(msg.str());
        }
    }
    if (!(scenario.fraction >= 0.0 && scenario.fraction <= 1.0))
        throw ConfigError("scenario: fraction must lie in [0, 1]");

    std::mt19937_64 rng(scenario.seed);
    for (int s : scenario.sensors) {
        const auto line = static_cast<std::size_t>(s);
        switch (scenario.kind) {
            case FaultKind::drop_sensor:
                for (auto& f : out) f.mask[line] = false;
                break;
            case FaultKind::partial_dropout:
                for (std::size_t k : sample_without_replacement(out.size(), scenario.fraction, rng))
                    out[k].mask[line] = false;
                break;
            case FaultKind::bias:
                for (std::size_t k : sample_without_replacement(out.size(), scenario.fraction, rng))
                    out[k].z[s] += scenario.bias;
                break;
            case FaultKind::none: break;
        }
    }
    return out;
}

}  // namespace flowfront::faults
