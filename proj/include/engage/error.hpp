#pragma once

#include <stdexcept>
#include <cstddef>
#include <string>

namespace engage {

// Invalid configuration value, unknown key, or mismatched artifact config.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed, missing, or inconsistent input data.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace engage

namespace engage {

// Non-finite loss or activation; `step` is the optimizer step (or row) index.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, std::size_t step)
        : std::runtime_error(what + " at step " + std::to_string(step)), step_(step) {}
    std::size_t step() const { return step_; }

private:
    std::size_t step_;
};

} // namespace engage
