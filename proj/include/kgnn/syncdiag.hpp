#pragma once

#include "kgnn/dynamics.hpp"
#include "kgnn/integrate.hpp"
#include "kgnn/types.hpp"

#include <iosfwd>
#include <optional>
#include <vector>

namespace kgnn {

struct OrderParameter {
    double r = 0.0;
    double phi = 0.0;
};

struct PairwiseStats {
    double max = 0.0;
    double mean = 0.0;
};

struct SyncReport {
    Vector r;    // per channel
    Vector phi;  // per channel
    double max_pairwise = 0.0;
    double mean_pairwise = 0.0;
    std::optional<double> freq_residual;
    std::optional<double> decay_rate;
};

/// r e^{i phi} = (1/N) sum_j e^{i X[j, channel]}
OrderParameter order_parameter(const OscillatorState& x, Eigen::Index channel);

/// Euclidean row distances over all unordered pairs. Requires n >= 2.
PairwiseStats pairwise_distance_stats(const OscillatorState& x);

/// Largest Euclidean distance between rows of the derivative at x_final.
double frequency_sync_residual(const OscillatorState& x_final, const DynamicsSpec& spec);

/// max_pairwise for every stored state.
std::vector<double> max_pairwise_series(const Trajectory& traj);

/// Least-squares slope of log(max_pairwise) against time, over stored states at
/// or after window_start (a fraction of the horizon) with max_pairwise > floor.
double fit_decay_rate(const Trajectory& traj, double window_start = 0.0, double floor = 1e-8);

struct OversmoothingCriteria {
    double distance_threshold = 1e-6;
    double rate_threshold = -0.01;
};

/// Final max_pairwise below the threshold and exponential contraction over the trajectory.
bool detect_oversmoothing(const Trajectory& traj, const OversmoothingCriteria& criteria = {});

SyncReport make_sync_report(const OscillatorState& x, const DynamicsSpec* spec = nullptr,
                            const Trajectory* traj = nullptr);

/// One row per channel: prefix,channel,r,phi,max_pairwise,mean_pairwise,freq_residual,decay_rate
void write_sync_rows(std::ostream& out, const std::string& prefix, const SyncReport& report);

}  // namespace kgnn
