#include "kgnn/gradient_analysis.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace kgnn {

ToyInstance make_toy_instance(int n, int f, double dt, std::uint64_t seed) {
    if (n < 1 || f < 1) throw InvalidInput("toy instance: n and f must be >= 1");
    if (!(dt > 0.0)) throw InvalidInput("toy instance: dt must be > 0");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    ToyInstance inst;
    inst.V.resize(n, f);
    inst.W.resize(f);
    inst.target.resize(n);
    for (Eigen::Index k = 0; k < inst.V.size(); ++k) inst.V.data()[k] = u(rng);
    for (Eigen::Index k = 0; k < f; ++k) inst.W[k] = u(rng);
    for (Eigen::Index k = 0; k < n; ++k) inst.target[k] = u(rng);
    inst.dt = dt;
    return inst;
}

std::vector<Vector> toy_unroll(const Vector& x0, double dt, long M) {
    if (M < 0) throw InvalidInput("toy_unroll: negative step count");
    const auto n = x0.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<Vector> xs;
    xs.reserve(static_cast<std::size_t>(M) + 1);
    xs.push_back(x0);
    for (long t = 1; t <= M; ++t) {
        const Vector& x = xs.back();
        Vector next(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            double s = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) s += std::sin(x[j] - x[i]);
            next[i] = x[i] + dt * (x0[i] + inv_n * s);
        }
        xs.push_back(std::move(next));
    }
    return xs;
}

double toy_loss(const ToyInstance& inst, long M) {
    const auto xs = toy_unroll(inst.x0(), inst.dt, M);
    const auto n = static_cast<double>(inst.target.size());
    return (xs.back() - inst.target).squaredNorm() / (2.0 * n);
}

Vector toy_gradient(const ToyInstance& inst, long M) {
    const auto xs = toy_unroll(inst.x0(), inst.dt, M);
    const auto n = inst.target.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    const double dt = inst.dt;

    Vector g = (xs.back() - inst.target) * inv_n;
    Vector g_x0 = Vector::Zero(n);
    for (long t = M; t >= 1; --t) {
        const Vector& x = xs[static_cast<std::size_t>(t - 1)];
        Vector prev = g;
        for (Eigen::Index i = 0; i < n; ++i) {
            double acc = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                // d x_j^t / d x_i^{t-1} through the coupling, and the diagonal term
                const double c = std::cos(x[i] - x[j]);
                acc += g[j] * c - g[i] * c;
            }
            prev[i] += dt * inv_n * acc;
        }
        g_x0 += dt * g;
        g = std::move(prev);
    }
    return inst.V.transpose() * (g + g_x0);
}

GradientBoundResult gradient_bound_check(const ToyInstance& inst, long M) {
    const Vector x0 = inst.x0();
    const auto n = static_cast<double>(x0.size());
    const double a = static_cast<double>(M) * inst.dt;
    const double b = 1.0 + inst.dt / n;
    const double v_norm = inst.V.cwiseAbs().rowwise().sum().maxCoeff();
    GradientBoundResult r;
    r.actual = toy_gradient(inst, M).cwiseAbs().maxCoeff();
    r.bound = (1.0 / n) * (a * (x0.cwiseAbs().maxCoeff() + 1.0) + inst.target.cwiseAbs().maxCoeff()) *
              (b + a) * b * v_norm;
    r.holds = r.actual <= r.bound * (1.0 + 1e-9);
    return r;
}

VanishingProbe vanishing_gradient_probe(const ToyInstance& inst, const std::vector<long>& depths) {
    if (depths.size() < 2) throw InvalidInput("vanishing_gradient_probe: need at least two depths");
    VanishingProbe p;
    p.depths = depths;
    for (long m : depths) p.norms.push_back(toy_gradient(inst, m).cwiseAbs().maxCoeff());

    double mx = 0.0, my = 0.0;
    const double k = static_cast<double>(depths.size());
    std::vector<double> logs;
    for (std::size_t i = 0; i < depths.size(); ++i) {
        // an exactly zero gradient has no finite log; the smallest double stands in
        logs.push_back(std::log(std::max(p.norms[i], std::numeric_limits<double>::min())));
        mx += static_cast<double>(depths[i]);
        my += logs.back();
    }
    mx /= k;
    my /= k;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < depths.size(); ++i) {
        const double dx = static_cast<double>(depths[i]) - mx;
        num += dx * (logs[i] - my);
        den += dx * dx;
    }
    if (den == 0.0) throw InvalidInput("vanishing_gradient_probe: depths must differ");
    p.rate = num / den;
    return p;
}

}  // namespace kgnn
