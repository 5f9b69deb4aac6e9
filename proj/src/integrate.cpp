#include "kgnn/integrate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace kgnn {

std::string to_string(SolverMethod m) {
    switch (m) {
        case SolverMethod::euler: return "euler";
        case SolverMethod::rk4: return "rk4";
        case SolverMethod::dopri5: return "dopri5";
    }
    return "unknown";
}

SolverMethod parse_solver_method(const std::string& name) {
    if (name == "euler") return SolverMethod::euler;
    if (name == "rk4") return SolverMethod::rk4;
    if (name == "dopri5") return SolverMethod::dopri5;
    throw InvalidInput("unknown solver '" + name + "'");
}

void SolverConfig::validate() const {
    if (!(T > 0.0)) throw InvalidInput("solver: T must be > 0");
    if (method == SolverMethod::dopri5) {
        if (!(rtol > 0.0) || !(atol > 0.0)) throw InvalidInput("solver: rtol and atol must be > 0");
        if (max_nfe < 1) throw InvalidInput("solver: max_nfe must be >= 1");
    } else if (!(dt > 0.0)) {
        throw InvalidInput("solver: dt must be > 0");
    }
}

void Trajectory::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out.precision(17);
    out << "time,node,channel,value\n";
    for (std::size_t s = 0; s < states.size(); ++s) {
        const auto& x = states[s];
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            for (Eigen::Index c = 0; c < x.cols(); ++c)
                out << times[s] << ',' << i << ',' << c << ',' << x(i, c) << '\n';
    }
}

std::string Trajectory::stats_json() const {
    std::ostringstream os;
    os << "{\"nfe\":" << nfe << ",\"accepted\":" << accepted << ",\"rejected\":" << rejected << "}";
    return os.str();
}

OscillatorState step_euler(const OscillatorState& x, const RhsFn& rhs, double dt) {
    OscillatorState out = rhs(x);
    out *= dt;
    out += x;
    return out;
}

OscillatorState step_rk4(const OscillatorState& x, const RhsFn& rhs, double dt) {
    const OscillatorState k1 = rhs(x);
    const OscillatorState k2 = rhs(x + 0.5 * dt * k1);
    const OscillatorState k3 = rhs(x + 0.5 * dt * k2);
    const OscillatorState k4 = rhs(x + dt * k3);
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Trajectory integrate_fixed(const OscillatorState& x0, const RhsFn& rhs, const SolverConfig& cfg,
                           bool record) {
    cfg.validate();
    if (cfg.method == SolverMethod::dopri5)
        throw InvalidInput("integrate_fixed: method must be euler or rk4");
    const long steps = std::max(1L, static_cast<long>(std::ceil(cfg.T / cfg.dt - 1e-9)));
    const int evals = cfg.method == SolverMethod::euler ? 1 : 4;

    Trajectory traj;
    traj.times.push_back(0.0);
    traj.states.push_back(x0);
    OscillatorState x = x0;
    for (long m = 0; m < steps; ++m) {
        const double t = m * cfg.dt;
        const double h = (m + 1 == steps) ? cfg.T - t : cfg.dt;
        x = cfg.method == SolverMethod::euler ? step_euler(x, rhs, h) : step_rk4(x, rhs, h);
        traj.nfe += evals;
        ++traj.accepted;
        if (!x.allFinite()) throw IntegrationError("non-finite state", m + 1);
        const double t_next = (m + 1 == steps) ? cfg.T : t + h;
        if (record || m + 1 == steps) {
            traj.times.push_back(t_next);
            traj.states.push_back(x);
        }
    }
    return traj;
}

namespace {

// Dormand-Prince 5(4) coefficients (autonomous right-hand sides, so no c_i)
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
// fifth-order minus embedded fourth-order weights
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

constexpr double kSafety = 0.9;
constexpr double kMinFactor = 0.2;
constexpr double kMaxFactor = 5.0;
constexpr double kBeta = 0.04;  // PI memory term
constexpr double kAlpha = 0.2 - 0.75 * kBeta;

double scaled_rms(const OscillatorState& v, const OscillatorState& ref, double atol, double rtol) {
    const auto n = v.size();
    if (n == 0) return 0.0;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double sc = atol + rtol * std::abs(ref.data()[i]);
        const double q = v.data()[i] / sc;
        acc += q * q;
    }
    return std::sqrt(acc / static_cast<double>(n));
}

}  // namespace

Trajectory integrate_dopri5(const OscillatorState& x0, const RhsFn& rhs, const SolverConfig& cfg,
                            bool record) {
    cfg.validate();
    const double T = cfg.T;
    Trajectory traj;
    traj.times.push_back(0.0);
    traj.states.push_back(x0);

    auto eval = [&](const OscillatorState& x) {
        if (traj.nfe >= cfg.max_nfe)
            throw IntegrationError("dopri5: max_nfe=" + std::to_string(cfg.max_nfe) + " exceeded",
                                   traj.accepted + traj.rejected);
        ++traj.nfe;
        return rhs(x);
    };

    OscillatorState x = x0;
    OscillatorState k1 = eval(x);

    // Starting step (Hairer, Norsett & Wanner II.4), capped at T/100. A state whose
    // derivative and probe derivative both vanish takes the whole interval at once.
    double h;
    {
        const double d0 = scaled_rms(x, x, cfg.atol, cfg.rtol);
        const double d1 = scaled_rms(k1, x, cfg.atol, cfg.rtol);
        const double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
        const OscillatorState f1 = eval(x + h0 * k1);
        const double d2 = scaled_rms(f1 - k1, x, cfg.atol, cfg.rtol) / h0;
        const double dmax = std::max(d1, d2);
        if (k1.isZero(0.0) && f1.isZero(0.0)) {
            h = T;
        } else {
            const double h1 = dmax <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dmax, 0.2);
            h = std::min({100.0 * h0, h1, T / 100.0});
        }
    }

    double t = 0.0;
    double err_prev = 1e-4;
    bool last_rejected = false;
    while (t < T) {
        if (h < 1e-12 * T)
            throw IntegrationError("dopri5: step size underflow at t=" + std::to_string(t),
                                   traj.accepted + traj.rejected);
        bool final_step = false;
        if (t + h >= T) {
            h = T - t;
            final_step = true;
        }

        const OscillatorState k2 = eval(x + h * (a21 * k1));
        const OscillatorState k3 = eval(x + h * (a31 * k1 + a32 * k2));
        const OscillatorState k4 = eval(x + h * (a41 * k1 + a42 * k2 + a43 * k3));
        const OscillatorState k5 = eval(x + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
        const OscillatorState k6 =
            eval(x + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
        OscillatorState x_new = x + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        OscillatorState k7 = eval(x_new);
        const OscillatorState err_vec = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

        double err = 0.0;
        {
            const auto n = err_vec.size();
            double acc = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double sc = cfg.atol + cfg.rtol * std::max(std::abs(x.data()[i]), std::abs(x_new.data()[i]));
                const double q = err_vec.data()[i] / sc;
                acc += q * q;
            }
            err = n ? std::sqrt(acc / static_cast<double>(n)) : 0.0;
        }
        if (!std::isfinite(err)) err = std::numeric_limits<double>::infinity();

        if (err <= 1.0) {
            if (!x_new.allFinite()) throw IntegrationError("dopri5: non-finite state", traj.accepted + 1);
            t = final_step ? T : t + h;
            x = std::move(x_new);
            k1 = std::move(k7);
            ++traj.accepted;
            if (record && t < T) {
                traj.times.push_back(t);
                traj.states.push_back(x);
            }
            double factor = err == 0.0 ? kMaxFactor
                                       : kSafety * std::pow(err, -kAlpha) * std::pow(err_prev, kBeta);
            factor = std::clamp(factor, kMinFactor, kMaxFactor);
            if (last_rejected) factor = std::min(factor, 1.0);
            h *= factor;
            err_prev = std::max(err, 1e-4);
            last_rejected = false;
        } else {
            ++traj.rejected;
            const double factor = std::isfinite(err) ? std::max(kMinFactor, kSafety * std::pow(err, -kAlpha))
                                                     : kMinFactor;
            h *= factor;
            last_rejected = true;
        }
    }
    traj.times.push_back(T);
    traj.states.push_back(x);
    return traj;
}

Trajectory integrate(const OscillatorState& x0, const RhsFn& rhs, const SolverConfig& cfg, bool record) {
    if (cfg.method == SolverMethod::dopri5) return integrate_dopri5(x0, rhs, cfg, record);
    return integrate_fixed(x0, rhs, cfg, record);
}

}  // namespace kgnn
