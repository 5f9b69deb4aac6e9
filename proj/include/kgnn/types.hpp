#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kgnn {

/// Dense row-major matrix used for node features, states and parameters.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// n x d node-feature matrix X(t) evolved by the ODE.
using OscillatorState = Matrix;

/// n x d matrix of natural frequencies, one row per node.
using NaturalFrequencies = Matrix;

/// Raised when inputs violate a documented shape or range contract.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a file cannot be read or parsed.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A state became non-finite (or a budget ran out) during time stepping.
class IntegrationError : public std::runtime_error {
public:
    IntegrationError(const std::string& what, long step)
        : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

    long step() const noexcept { return step_; }

private:
    long step_;
};

/// Training loss became non-finite.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, int epoch)
        : std::runtime_error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}

    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace kgnn
