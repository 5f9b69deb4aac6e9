#include "kgnn/dynamics.hpp"

#include <cmath>

namespace kgnn {

std::string to_string(DynamicsKind kind) {
    switch (kind) {
        case DynamicsKind::kuramoto: return "kuramoto";
        case DynamicsKind::kuramoto_identical: return "kuramoto_identical";
        case DynamicsKind::grand_linear: return "grand_linear";
        case DynamicsKind::grand_modified: return "grand_modified";
    }
    return "unknown";
}

DynamicsKind parse_dynamics_kind(const std::string& name) {
    if (name == "kuramoto") return DynamicsKind::kuramoto;
    if (name == "kuramoto_identical") return DynamicsKind::kuramoto_identical;
    if (name == "grand_linear") return DynamicsKind::grand_linear;
    if (name == "grand_modified") return DynamicsKind::grand_modified;
    throw InvalidInput("unknown dynamics '" + name + "'");
}

void DynamicsSpec::validate(const OscillatorState& x) const {
    if (!coupling) throw InvalidInput("dynamics: coupling matrix missing");
    if (coupling->n != x.rows())
        throw InvalidInput("dynamics: coupling is " + std::to_string(coupling->n) +
                           " nodes, state has " + std::to_string(x.rows()) + " rows");
    if (kind == DynamicsKind::kuramoto) {
        if (!omega) throw InvalidInput("dynamics: kuramoto requires natural frequencies");
        if (omega->rows() != x.rows() || omega->cols() != x.cols())
            throw InvalidInput("dynamics: natural frequencies shape differs from state");
    }
    if (kind == DynamicsKind::grand_modified) {
        if (!x0) throw InvalidInput("dynamics: grand_modified requires x0");
        if (x0->rows() != x.rows() || x0->cols() != x.cols())
            throw InvalidInput("dynamics: x0 shape differs from state");
    }
}

namespace {

// K * sum_j a_ij sin(x_j - x_i), in CSR row order
OscillatorState sine_coupling(const OscillatorState& x, const CouplingMatrix& a, double k) {
    const auto n = x.rows(), d = x.cols();
    OscillatorState out = OscillatorState::Zero(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (auto e = a.row_ptr[i]; e < a.row_ptr[i + 1]; ++e) {
            const double w = a.val[e];
            const auto j = a.col[e];
            for (Eigen::Index c = 0; c < d; ++c) out(i, c) += w * std::sin(x(j, c) - x(i, c));
        }
    }
    out *= k;
    return out;
}

void require_kind(const DynamicsSpec& spec, std::initializer_list<DynamicsKind> kinds, const char* op) {
    for (auto k : kinds)
        if (spec.kind == k) return;
    throw InvalidInput(std::string(op) + ": dynamics kind " + to_string(spec.kind) + " not accepted");
}

}  // namespace

OscillatorState rhs_kuramoto(const OscillatorState& x, const DynamicsSpec& spec) {
    require_kind(spec, {DynamicsKind::kuramoto}, "rhs_kuramoto");
    spec.validate(x);
    OscillatorState out = sine_coupling(x, *spec.coupling, spec.coupling_strength);
    out += *spec.omega;
    return out;
}

OscillatorState rhs_kuramoto_local_order(const OscillatorState& x, const DynamicsSpec& spec) {
    require_kind(spec, {DynamicsKind::kuramoto}, "rhs_kuramoto_local_order");
    spec.validate(x);
    const Matrix c = spec.coupling->multiply(x.array().cos().matrix());
    const Matrix s = spec.coupling->multiply(x.array().sin().matrix());
    OscillatorState out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double r = std::hypot(c.data()[i], s.data()[i]);
        const double phi = std::atan2(s.data()[i], c.data()[i]);
        out.data()[i] = spec.omega->data()[i] + spec.coupling_strength * r * std::sin(phi - x.data()[i]);
    }
    return out;
}

OscillatorState rhs_identical(const OscillatorState& x, const DynamicsSpec& spec) {
    require_kind(spec, {DynamicsKind::kuramoto_identical}, "rhs_identical");
    spec.validate(x);
    return sine_coupling(x, *spec.coupling, spec.coupling_strength);
}

OscillatorState rhs_grand_linear(const OscillatorState& x, const DynamicsSpec& spec) {
    require_kind(spec, {DynamicsKind::grand_linear}, "rhs_grand_linear");
    spec.validate(x);
    OscillatorState out = spec.coupling->multiply(x);
    out -= x;
    return out;
}

OscillatorState rhs_grand_modified(const OscillatorState& x, const DynamicsSpec& spec) {
    require_kind(spec, {DynamicsKind::grand_modified}, "rhs_grand_modified");
    spec.validate(x);
    OscillatorState out = spec.coupling->multiply(x);
    out -= x;
    out *= spec.alpha;
    out += spec.beta * *spec.x0;
    return out;
}

OscillatorState evaluate_rhs(const OscillatorState& x, const DynamicsSpec& spec) {
    switch (spec.kind) {
        case DynamicsKind::kuramoto: return rhs_kuramoto(x, spec);
        case DynamicsKind::kuramoto_identical: return rhs_identical(x, spec);
        case DynamicsKind::grand_linear: return rhs_grand_linear(x, spec);
        case DynamicsKind::grand_modified: return rhs_grand_modified(x, spec);
    }
    throw InvalidInput("evaluate_rhs: unknown dynamics kind");
}

Vector energy_U(const OscillatorState& x, const CouplingMatrix& a) {
    if (a.n != x.rows()) throw InvalidInput("energy_U: coupling/state size mismatch");
    Vector u = Vector::Zero(x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (auto e = a.row_ptr[i]; e < a.row_ptr[i + 1]; ++e) {
            const auto j = a.col[e];
            for (Eigen::Index c = 0; c < x.cols(); ++c)
                u[c] += a.val[e] * (1.0 - std::cos(x(i, c) - x(j, c)));
        }
    }
    return 0.5 * u;
}

GradientIdentityResult energy_gradient_identity_check(const OscillatorState& x,
                                                      const DynamicsSpec& spec, double h) {
    require_kind(spec, {DynamicsKind::kuramoto_identical}, "energy_gradient_identity_check");
    spec.validate(x);
    const CouplingMatrix& a = *spec.coupling;
    const OscillatorState rhs = rhs_identical(x, spec);

    GradientIdentityResult result;
    result.hypothesis_holds = a.is_symmetric(1e-12);
    OscillatorState probe = x;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
            const double orig = probe(i, c);
            probe(i, c) = orig + h;
            const double up = energy_U(probe, a)[c];
            probe(i, c) = orig - h;
            const double down = energy_U(probe, a)[c];
            probe(i, c) = orig;
            const double fd = (up - down) / (2.0 * h);
            const double expected = -rhs(i, c) / spec.coupling_strength;
            result.max_residual = std::max(result.max_residual, std::abs(fd - expected));
        }
    }
    return result;
}

}  // namespace kgnn
