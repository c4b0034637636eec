#pragma once

#include <stdexcept>
#include <string>

namespace coastal {

/// Invalid user input: bad config value, malformed file, violated precondition.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failure at runtime: CFL violation, non-finite field, diverged loss.
class NumericsError : public std::runtime_error {
public:
    explicit NumericsError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace coastal
