#pragma once

#include "kgnn/coupling.hpp"
#include "kgnn/types.hpp"

#include <memory>
#include <optional>
#include <string>

namespace kgnn {

enum class DynamicsKind { kuramoto, kuramoto_identical, grand_linear, grand_modified };

std::string to_string(DynamicsKind kind);
DynamicsKind parse_dynamics_kind(const std::string& name);

/// Right-hand side selection plus the fields each kind needs.
struct DynamicsSpec {
    DynamicsKind kind = DynamicsKind::kuramoto;
    double coupling_strength = 1.0;  // K
    double alpha = 1.0;              // grand_modified
    double beta = 0.0;               // grand_modified
    std::shared_ptr<const CouplingMatrix> coupling;
    std::optional<NaturalFrequencies> omega;  // kuramoto
    std::optional<OscillatorState> x0;        // grand_modified

    /// Throws InvalidInput when a field required by `kind` is missing or mis-shaped.
    void validate(const OscillatorState& x) const;
};

/// dX = Omega + K * sum_j a_ij sin(x_j - x_i), evaluated edge by edge.
OscillatorState rhs_kuramoto(const OscillatorState& x, const DynamicsSpec& spec);

/// Same derivative computed through the per-node local order parameter
/// r_k e^{i phi_k} = sum_j a_kj e^{i x_j}:  dX = Omega + K r sin(phi - X).
OscillatorState rhs_kuramoto_local_order(const OscillatorState& x, const DynamicsSpec& spec);

/// dX = K * sum_j a_ij sin(x_j - x_i)
OscillatorState rhs_identical(const OscillatorState& x, const DynamicsSpec& spec);

/// dX = (A - I) X
OscillatorState rhs_grand_linear(const OscillatorState& x, const DynamicsSpec& spec);

/// dX = alpha (A - I) X + beta X(0)
OscillatorState rhs_grand_modified(const OscillatorState& x, const DynamicsSpec& spec);

/// Dispatches on spec.kind.
OscillatorState evaluate_rhs(const OscillatorState& x, const DynamicsSpec& spec);

/// Energy per channel:  U_k = 1/2 sum_{(i,j) in support} a_ij (1 - cos(x_ik - x_jk)).
/// For symmetric weights this counts every undirected edge once.
Vector energy_U(const OscillatorState& x, const CouplingMatrix& a);

struct GradientIdentityResult {
    double max_residual = 0.0;
    /// False when the coupling is not symmetric; the identity is then outside its hypothesis.
    bool hypothesis_holds = false;
};

/// Central finite differences of energy_U against -rhs_identical / K.
GradientIdentityResult energy_gradient_identity_check(const OscillatorState& x,
                                                      const DynamicsSpec& spec, double h);

}  // namespace kgnn
