#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace twin {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Configuration or argument is invalid (CLI exit code 2).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// External file does not match its schema (CLI exit code 3).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor shapes do not chain.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A state became non-finite during integration (CLI exit code 4).
struct DivergenceError : std::runtime_error {
    DivergenceError(const std::string& what, long step)
        : std::runtime_error(what + " at step " + std::to_string(step)), step(step) {}
    long step;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}

}  // namespace twin
