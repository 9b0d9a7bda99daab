#pragma once

#include <stdexcept>
#include <string>

namespace flowfront {

/// Invalid input: bad configuration values, malformed files, violated preconditions.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical procedure failed (solver non-convergence, non-finite state, singular covariance).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace flowfront
