#pragma once

#include "kgnn/types.hpp"

#include <cstdint>
#include <vector>

namespace kgnn {

/// Scalar-channel, mean-field setting used to study gradient growth with depth:
///   x^t = x^{t-1} + dt (x^0 + (1/n) sum_j sin(x_j^{t-1} - x_i^{t-1})),  X^0 = V W,
///   J = 1/(2n) sum_i (x_i^M - target_i)^2.
struct ToyInstance {
    Matrix V;       // n x f
    Vector W;       // f
    Vector target;  // n
    double dt = 0.01;

    Vector x0() const { return V * W; }
};

/// V, W and target drawn uniformly from [-1, 1].
ToyInstance make_toy_instance(int n, int f, double dt, std::uint64_t seed);

/// States x^0 .. x^M of the recursion (M + 1 vectors).
std::vector<Vector> toy_unroll(const Vector& x0, double dt, long M);

double toy_loss(const ToyInstance& inst, long M);

/// dJ/dW by reverse accumulation through all M steps, including the drift path of x^0.
Vector toy_gradient(const ToyInstance& inst, long M);

struct GradientBoundResult {
    double actual = 0.0;  // max_k |dJ/dW_k|
    double bound = 0.0;
    bool holds = false;
};

/// Compares max|dJ/dW| with
///   (1/n) [a (max|x^0| + 1) + max|target|] (b + a) b ||V||_inf,  a = M dt, b = 1 + dt/n,
/// where ||V||_inf is the maximum absolute row sum. holds = actual <= bound (1 + 1e-9).
GradientBoundResult gradient_bound_check(const ToyInstance& inst, long M);

struct VanishingProbe {
    std::vector<long> depths;
    std::vector<double> norms;  // max|dJ/dW| per depth
    /// Least-squares slope of log(norm) against depth; per-layer exponential rate.
    double rate = 0.0;
};

VanishingProbe vanishing_gradient_probe(const ToyInstance& inst, const std::vector<long>& depths);

}  // namespace kgnn
