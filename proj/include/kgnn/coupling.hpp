#pragma once

#include "kgnn/graph.hpp"
#include "kgnn/types.hpp"

#include <filesystem>
#include <vector>

namespace kgnn {

/// Sparse n x n coupling matrix in CSR form. Row i holds a_ij over the
/// support of node i, columns sorted ascending.
struct CouplingMatrix {
    int n = 0;
    std::vector<std::int64_t> row_ptr{0};
    std::vector<int> col;
    std::vector<double> val;

    std::size_t nnz() const { return col.size(); }

    /// A * X
    Matrix multiply(const Matrix& x) const;
    /// A^T * X
    Matrix multiply_transpose(const Matrix& x) const;

    double row_sum(int i) const;
    /// Value at (i, j) or 0 when outside the support.
    double at(int i, int j) const;
    /// a_ij == a_ji within tol, with matching supports.
    bool is_symmetric(double tol = 1e-12) const;
    Matrix to_dense() const;

    void write_csv(const std::filesystem::path& path) const;

    /// Graph out-edges, optionally with a self-loop on every node; values zeroed.
    static CouplingMatrix support_of(const Graph& g, bool with_self_loops);
};

/// Divisor applied to attention logits.
enum class AttentionScale { dk, sqrt_dk };

struct AttentionHead {
    Matrix key;    // d_k x d
    Matrix query;  // d_k x d
};

struct AttentionParams {
    std::vector<AttentionHead> heads;
    AttentionScale scale = AttentionScale::dk;

    int num_heads() const { return static_cast<int>(heads.size()); }
    int key_dim() const { return heads.empty() ? 0 : static_cast<int>(heads.front().key.rows()); }
    int input_dim() const { return heads.empty() ? 0 : static_cast<int>(heads.front().key.cols()); }
    double divisor() const;

    /// Throws when heads disagree in shape or d_k < 1.
    void validate() const;
};

/// Intermediate values kept for the backward pass through attention.
struct AttentionCache {
    CouplingMatrix averaged;
    std::vector<std::vector<double>> head_weights;  // per head, aligned with averaged.col
    std::vector<Matrix> keys;                       // per head, n x d_k  (X W_K^T)
    std::vector<Matrix> queries;                    // per head, n x d_k  (X W_Q^T)
};

/// Multi-head scaled dot-product attention over the graph out-edges plus a
/// self-loop per node; each head is a row softmax, heads are averaged.
CouplingMatrix compute_attention(const OscillatorState& x0, const AttentionParams& params,
                                 const Graph& g);
AttentionCache compute_attention_cached(const OscillatorState& x0,
                                        const AttentionParams& params, const Graph& g);

struct AttentionGrads {
    Matrix x;                   // n x d
    std::vector<Matrix> key;    // per head, d_k x d
    std::vector<Matrix> query;  // per head, d_k x d
};

/// Vector-Jacobian product of compute_attention. grad_values is dL/da_ij aligned
/// with cache.averaged.col.
AttentionGrads attention_backward(const AttentionCache& cache, const OscillatorState& x0,
                                  const AttentionParams& params,
                                  const std::vector<double>& grad_values);

/// Row-uniform weights over each node's support.
CouplingMatrix uniform_coupling(const Graph& g, bool with_self_loops);

/// Every row sums to 1 within tol and all entries are >= -tol. Empty rows fail.
bool row_stochastic_check(const CouplingMatrix& a, double tol);

}  // namespace kgnn
