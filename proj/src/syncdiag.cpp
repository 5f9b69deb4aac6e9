#include "kgnn/syncdiag.hpp"

#include <cmath>
#include <ostream>

namespace kgnn {

OrderParameter order_parameter(const OscillatorState& x, Eigen::Index channel) {
    if (channel < 0 || channel >= x.cols()) throw InvalidInput("order_parameter: channel out of range");
    const auto n = x.rows();
    if (n == 0) return {};
    double re = 0.0, im = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        re += std::cos(x(j, channel));
        im += std::sin(x(j, channel));
    }
    re /= static_cast<double>(n);
    im /= static_cast<double>(n);
    return {std::hypot(re, im), std::atan2(im, re)};
}

PairwiseStats pairwise_distance_stats(const OscillatorState& x) {
    const auto n = x.rows();
    if (n < 2) throw InvalidInput("pairwise_distance_stats: need at least two nodes");
    PairwiseStats s;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double dist = (x.row(i) - x.row(j)).norm();
            sum += dist;
            s.max = std::max(s.max, dist);
        }
    }
    s.mean = sum / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
    return s;
}

double frequency_sync_residual(const OscillatorState& x_final, const DynamicsSpec& spec) {
    const OscillatorState dx = evaluate_rhs(x_final, spec);
    if (dx.rows() < 2) return 0.0;
    return pairwise_distance_stats(dx).max;
}

std::vector<double> max_pairwise_series(const Trajectory& traj) {
    std::vector<double> out;
    out.reserve(traj.states.size());
    for (const auto& x : traj.states) out.push_back(pairwise_distance_stats(x).max);
    return out;
}

double fit_decay_rate(const Trajectory& traj, double window_start, double floor) {
    if (traj.states.size() < 10)
        throw InvalidInput("fit_decay_rate: need at least 10 recorded states");
    const double t_end = traj.times.back();
    const double t_begin = window_start * t_end;
    std::vector<double> ts, ys;
    for (std::size_t s = 0; s < traj.states.size(); ++s) {
        if (traj.times[s] < t_begin) continue;
        const double mp = pairwise_distance_stats(traj.states[s]).max;
        if (mp > floor) {
            ts.push_back(traj.times[s]);
            ys.push_back(std::log(mp));
        }
    }
    if (ts.size() < 2) throw InvalidInput("fit_decay_rate: degenerate window (distances below floor)");
    const double m = static_cast<double>(ts.size());
    double tm = 0.0, ym = 0.0;
    for (std::size_t k = 0; k < ts.size(); ++k) {
        tm += ts[k];
        ym += ys[k];
    }
    tm /= m;
    ym /= m;
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < ts.size(); ++k) {
        num += (ts[k] - tm) * (ys[k] - ym);
        den += (ts[k] - tm) * (ts[k] - tm);
    }
    if (den == 0.0) throw InvalidInput("fit_decay_rate: degenerate window (single time point)");
    return num / den;
}

bool detect_oversmoothing(const Trajectory& traj, const OversmoothingCriteria& criteria) {
    const double final_max = pairwise_distance_stats(traj.final_state()).max;
    if (!(final_max < criteria.distance_threshold)) return false;
    try {
        return fit_decay_rate(traj) < criteria.rate_threshold;
    } catch (const InvalidInput&) {
        // everything already below the fitting floor from the start
        return false;
    }
}

SyncReport make_sync_report(const OscillatorState& x, const DynamicsSpec* spec, const Trajectory* traj) {
    SyncReport rep;
    rep.r.resize(x.cols());
    rep.phi.resize(x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const auto op = order_parameter(x, c);
        rep.r[c] = op.r;
        rep.phi[c] = op.phi;
    }
    if (x.rows() >= 2) {
        const auto pw = pairwise_distance_stats(x);
        rep.max_pairwise = pw.max;
        rep.mean_pairwise = pw.mean;
    }
    if (spec) rep.freq_residual = frequency_sync_residual(x, *spec);
    if (traj && traj->states.size() >= 10) {
        try {
            rep.decay_rate = fit_decay_rate(*traj);
        } catch (const InvalidInput&) {
        }
    }
    return rep;
}

void write_sync_rows(std::ostream& out, const std::string& prefix, const SyncReport& report) {
    for (Eigen::Index c = 0; c < report.r.size(); ++c) {
        out << prefix << ',' << c << ',' << report.r[c] << ',' << report.phi[c] << ','
            << report.max_pairwise << ',' << report.mean_pairwise << ',';
        if (report.freq_residual) out << *report.freq_residual;
        out << ',';
        if (report.decay_rate) out << *report.decay_rate;
        out << '\n';
    }
}

}  // namespace kgnn
