#pragma once

#include "kgnn/coupling.hpp"
#include "kgnn/dynamics.hpp"
#include "kgnn/graph.hpp"
#include "kgnn/integrate.hpp"
#include "kgnn/types.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace kgnn {

/// Hyperparameters fixed for the lifetime of a model.
struct ModelConfig {
    DynamicsKind dynamics = DynamicsKind::kuramoto;
    int hidden_dim = 64;  // d
    int heads = 4;
    int key_dim = 16;     // d_k
    AttentionScale attention_scale = AttentionScale::dk;
    double coupling_strength = 1.0;  // K
    double T = 1.0;
    double dt = 0.1;
    /// X(0) and Omega share the encoder; when false Omega gets its own affine map.
    bool tie_omega = true;
    /// grand_modified only: when false beta stays at its initial value.
    bool learn_beta = true;
    double beta_init = 1.0;

    /// Euler steps in the unroll: round(T/dt), at least 1 when T > 0.
    long steps() const;
    /// T / steps(), so that steps * step_size == T.
    double step_size() const;
    void validate() const;
};

/// Named view of one parameter array.
struct ParamBlock {
    std::string name;
    Matrix* value;
    bool trainable;
};

struct ConstParamBlock {
    std::string name;
    const Matrix* value;
    bool trainable;
};

/// Learnable arrays plus the config they were built for. Vectors are stored as 1 x k rows.
struct ModelParams {
    ModelConfig config;
    Matrix enc_W;    // d x f
    Matrix enc_b;    // 1 x d
    Matrix omega_W;  // d x f, untied only
    Matrix omega_b;  // 1 x d, untied only
    AttentionParams attention;
    Matrix dec_W;    // c x d
    Matrix dec_b;    // 1 x c
    Matrix grand_alpha = Matrix::Ones(1, 1);
    Matrix grand_beta = Matrix::Ones(1, 1);

    /// Linear-layer style uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
    static ModelParams initialize(const ModelConfig& config, int feature_dim, int num_classes,
                                  std::uint64_t seed);

    /// Same shapes, all entries zero.
    ModelParams zeros_like() const;

    std::vector<ParamBlock> blocks();
    std::vector<ConstParamBlock> blocks() const;
    std::size_t num_scalars() const;

    void save(const std::filesystem::path& path) const;
    static ModelParams load(const std::filesystem::path& path);
};

using ModelGrads = ModelParams;

/// Everything the backward pass needs from a forward unroll.
struct UnrollTape {
    Matrix encoded;        // V enc_W^T + enc_b, before dropout
    std::optional<Matrix> dropout_mask;
    OscillatorState x0;    // encoded (masked)
    NaturalFrequencies omega;
    std::shared_ptr<const CouplingMatrix> coupling;
    std::optional<AttentionCache> attention;  // absent when the coupling was supplied
    long steps = 0;
    double step_size = 0.0;
    /// States at the stored step indices; all of Z^0..Z^M unless checkpointing.
    std::vector<OscillatorState> states;
    long checkpoint_stride = 1;
    OscillatorState final_state;
    Matrix logits;
};

struct ForwardOptions {
    /// Multiplicative mask on the encoder output (already scaled by 1/(1-p)).
    const Matrix* dropout_mask = nullptr;
    /// Replaces attention with a fixed coupling (no attention gradients).
    std::shared_ptr<const CouplingMatrix> fixed_coupling;
    /// Keep every k-th state and recompute the rest during backward; 0 picks
    /// automatically from a memory budget.
    long checkpoint_stride = 0;
    std::size_t tape_budget_bytes = std::size_t{512} << 20;
};

/// X(0) = Omega = V enc_W^T + enc_b
OscillatorState encode(const Graph& g, const ModelParams& p);

/// Attention on X(0), Euler unroll of the configured dynamics, linear decoder on X(T).
UnrollTape forward(const Graph& g, const ModelParams& p, const ForwardOptions& options = {});

/// Mean over masked nodes of -log softmax(logits)[label].
double cross_entropy(const Matrix& logits, const std::vector<int>& labels,
                     const std::vector<bool>& mask);
/// d(cross_entropy)/d(logits); zero rows outside the mask.
Matrix cross_entropy_grad(const Matrix& logits, const std::vector<int>& labels,
                          const std::vector<bool>& mask);

/// Row-wise softmax.
Matrix softmax_rows(const Matrix& logits);

/// Argmax accuracy over the mask, ties to the lowest class index.
double accuracy(const Matrix& logits, const std::vector<int>& labels, const std::vector<bool>& mask);

struct LossReport {
    double loss = 0.0;
    Matrix logits;
    double accuracy = 0.0;
};

LossReport evaluate(const Graph& g, const ModelParams& p, const std::vector<bool>& mask);
double evaluate_accuracy(const ModelParams& p, const Graph& g, const std::vector<bool>& mask);

/// Exact reverse-mode gradients of the discrete forward computation, seeded with dL/dlogits.
ModelGrads backward(const Graph& g, const ModelParams& p, const UnrollTape& tape,
                    const Matrix& logits_grad);

/// Dynamics spec matching the model's ODE at X(0) and the given coupling.
DynamicsSpec model_dynamics(const ModelParams& p, const OscillatorState& x0,
                            const NaturalFrequencies& omega,
                            std::shared_ptr<const CouplingMatrix> coupling);

struct InferenceResult {
    Matrix logits;
    Trajectory trajectory;
};

/// Integrates the trained ODE with an arbitrary solver (no dropout, no gradients).
InferenceResult infer(const Graph& g, const ModelParams& p, const SolverConfig& solver);

/// Kuramoto right-hand side through cached sin/cos and two sparse products;
/// the fast path used by training and inference. Other kinds defer to evaluate_rhs.
OscillatorState rhs_fast(const OscillatorState& x, const DynamicsSpec& spec);

}  // namespace kgnn
