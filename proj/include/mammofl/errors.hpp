#pragma once

#include <stdexcept>
#include <string>

namespace mammofl {

/// Bad shapes, bad hyperparameters, malformed config files.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Unreadable or inconsistent data files (PGM, manifests, weight files).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite values or degenerate state during optimization.
struct TrainingError : std::runtime_error {
    explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Violations of the federation wire protocol.
struct ProtocolError : std::runtime_error {
    explicit ProtocolError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Statistics computed on inputs where they are undefined.
struct StatsError : std::runtime_error {
    explicit StatsError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mammofl
