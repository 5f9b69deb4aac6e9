#pragma once

#include "kgnn/types.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace kgnn {

using RhsFn = std::function<OscillatorState(const OscillatorState&)>;

enum class SolverMethod { euler, rk4, dopri5 };

std::string to_string(SolverMethod m);
SolverMethod parse_solver_method(const std::string& name);

struct SolverConfig {
    SolverMethod method = SolverMethod::euler;
    double dt = 0.1;
    double T = 1.0;
    double rtol = 1e-7;
    double atol = 1e-7;
    long max_nfe = 1'000'000;

    void validate() const;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<OscillatorState> states;  // every step in record mode, else {x0, x(T)}
    long nfe = 0;
    long accepted = 0;
    long rejected = 0;

    const OscillatorState& final_state() const { return states.back(); }

    /// Columns time,node,channel,value for every stored state.
    void write_csv(const std::filesystem::path& path) const;
    /// {"nfe":..,"accepted":..,"rejected":..}
    std::string stats_json() const;
};

/// x + dt * rhs(x)
OscillatorState step_euler(const OscillatorState& x, const RhsFn& rhs, double dt);

/// Classic fourth-order Runge-Kutta step (4 evaluations).
OscillatorState step_rk4(const OscillatorState& x, const RhsFn& rhs, double dt);

/// ceil(T/dt) Euler or RK4 steps; the last step is shortened to land on T.
Trajectory integrate_fixed(const OscillatorState& x0, const RhsFn& rhs, const SolverConfig& cfg,
                           bool record);

/// Dormand-Prince 5(4) with PI step control and FSAL. The starting-step heuristic
/// costs one extra evaluation, so nfe = 2 + 6 * (accepted + rejected).
/// When record is set, every accepted state is stored.
Trajectory integrate_dopri5(const OscillatorState& x0, const RhsFn& rhs, const SolverConfig& cfg,
                            bool record = false);

/// Dispatches on cfg.method.
Trajectory integrate(const OscillatorState& x0, const RhsFn& rhs, const SolverConfig& cfg,
                     bool record = false);

}  // namespace kgnn
