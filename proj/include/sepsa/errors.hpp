#pragma once

#include <stdexcept>
#include <string>

namespace sepsa {

// Shape/dimension mismatch between tensors or layers.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration value (bad group count, rate out of range, unknown key, ...).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// API contract violation (backward on non-scalar, stale graph, bad targets, ...).
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Problem with external data (missing file, corrupt WAV, malformed manifest line).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace sepsa
