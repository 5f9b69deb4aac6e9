#include "kgnn/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace kgnn {

Matrix CouplingMatrix::multiply(const Matrix& x) const {
    if (x.rows() != n) throw InvalidInput("CouplingMatrix::multiply: row mismatch");
    Matrix out = Matrix::Zero(n, x.cols());
    for (int i = 0; i < n; ++i) {
        auto dst = out.row(i);
        for (auto k = row_ptr[i]; k < row_ptr[i + 1]; ++k) dst.noalias() += val[k] * x.row(col[k]);
    }
    return out;
}

Matrix CouplingMatrix::multiply_transpose(const Matrix& x) const {
    if (x.rows() != n) throw InvalidInput("CouplingMatrix::multiply_transpose: row mismatch");
    Matrix out = Matrix::Zero(n, x.cols());
    for (int i = 0; i < n; ++i) {
        auto src = x.row(i);
        for (auto k = row_ptr[i]; k < row_ptr[i + 1]; ++k) out.row(col[k]).noalias() += val[k] * src;
    }
    return out;
}

double CouplingMatrix::row_sum(int i) const {
    double s = 0.0;
    for (auto k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += val[k];
    return s;
}

double CouplingMatrix::at(int i, int j) const {
    const auto first = col.begin() + row_ptr[i];
    const auto last = col.begin() + row_ptr[i + 1];
    const auto it = std::lower_bound(first, last, j);
    if (it == last || *it != j) return 0.0;
    return val[static_cast<std::size_t>(it - col.begin())];
}

bool CouplingMatrix::is_symmetric(double tol) const {
    for (int i = 0; i < n; ++i) {
        for (auto k = row_ptr[i]; k < row_ptr[i + 1]; ++k) {
            const int j = col[k];
            const auto first = col.begin() + row_ptr[j];
            const auto last = col.begin() + row_ptr[j + 1];
            const auto it = std::lower_bound(first, last, i);
            if (it == last || *it != i) return false;
            if (std::abs(val[static_cast<std::size_t>(it - col.begin())] - val[k]) > tol) return false;
        }
    }
    return true;
}

Matrix CouplingMatrix::to_dense() const {
    Matrix d = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (auto k = row_ptr[i]; k < row_ptr[i + 1]; ++k) d(i, col[k]) += val[k];
    return d;
}

void CouplingMatrix::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out.precision(17);
    out << "row,col,value\n";
    for (int i = 0; i < n; ++i)
        for (auto k = row_ptr[i]; k < row_ptr[i + 1]; ++k) out << i << ',' << col[k] << ',' << val[k] << '\n';
}

CouplingMatrix CouplingMatrix::support_of(const Graph& g, bool with_self_loops) {
    CouplingMatrix a;
    a.n = g.num_nodes();
    a.row_ptr.assign(static_cast<std::size_t>(a.n) + 1, 0);
    a.col.reserve(g.num_edges() + (with_self_loops ? static_cast<std::size_t>(a.n) : 0));
    for (int i = 0; i < a.n; ++i) {
        auto nb = g.neighbors(i);  // sorted
        bool placed_self = !with_self_loops;
        for (int j : nb) {
            if (!placed_self && i <= j) {
                a.col.push_back(i);
                placed_self = true;
            }
            if (j == i && with_self_loops) continue;  // already placed
            a.col.push_back(j);
        }
        if (!placed_self) a.col.push_back(i);
        a.row_ptr[i + 1] = static_cast<std::int64_t>(a.col.size());
    }
    a.val.assign(a.col.size(), 0.0);
    return a;
}

// ---------------------------------------------------------------------------

double AttentionParams::divisor() const {
    const double dk = key_dim();
    return scale == AttentionScale::dk ? dk : std::sqrt(dk);
}

void AttentionParams::validate() const {
    if (heads.empty()) throw InvalidInput("attention: at least one head required");
    const auto dk = heads.front().key.rows();
    const auto d = heads.front().key.cols();
    if (dk < 1) throw InvalidInput("attention: d_k must be >= 1");
    for (const auto& h : heads) {
        if (h.key.rows() != dk || h.key.cols() != d || h.query.rows() != dk || h.query.cols() != d)
            throw InvalidInput("attention: heads have inconsistent shapes");
    }
}

AttentionCache compute_attention_cached(const OscillatorState& x0, const AttentionParams& params,
                                        const Graph& g) {
    params.validate();
    if (x0.cols() != params.input_dim())
        throw InvalidInput("compute_attention: state has " + std::to_string(x0.cols()) +
                           " columns, projections expect " + std::to_string(params.input_dim()));
    if (x0.rows() != g.num_nodes()) throw InvalidInput("compute_attention: state rows != node count");

    AttentionCache cache;
    cache.averaged = CouplingMatrix::support_of(g, true);
    const auto& a = cache.averaged;
    const int n = a.n;
    const double inv_div = 1.0 / params.divisor();
    const double inv_heads = 1.0 / params.num_heads();
    std::vector<double> avg(a.nnz(), 0.0);

    // heads reduce in fixed order for reproducibility
    for (const auto& head : params.heads) {
        Matrix keys = x0 * head.key.transpose();
        Matrix queries = x0 * head.query.transpose();
        std::vector<double> w(a.nnz());
        for (int i = 0; i < n; ++i) {
            const auto b = a.row_ptr[i], e = a.row_ptr[i + 1];
            if (b == e) throw InvalidInput("compute_attention: node with empty support");
            double mx = -std::numeric_limits<double>::infinity();
            for (auto k = b; k < e; ++k) {
                w[k] = keys.row(i).dot(queries.row(a.col[k])) * inv_div;
                mx = std::max(mx, w[k]);
            }
            double z = 0.0;
            for (auto k = b; k < e; ++k) {
                w[k] = std::exp(w[k] - mx);
                z += w[k];
            }
            for (auto k = b; k < e; ++k) {
                w[k] /= z;
                avg[k] += inv_heads * w[k];
            }
        }
        cache.head_weights.push_back(std::move(w));
        cache.keys.push_back(std::move(keys));
        cache.queries.push_back(std::move(queries));
    }
    cache.averaged.val = std::move(avg);
    return cache;
}

CouplingMatrix compute_attention(const OscillatorState& x0, const AttentionParams& params,
                                 const Graph& g) {
    return compute_attention_cached(x0, params, g).averaged;
}

AttentionGrads attention_backward(const AttentionCache& cache, const OscillatorState& x0,
                                  const AttentionParams& params,
                                  const std::vector<double>& grad_values) {
    const auto& a = cache.averaged;
    if (grad_values.size() != a.nnz()) throw InvalidInput("attention_backward: gradient size mismatch");
    const int n = a.n;
    const double inv_div = 1.0 / params.divisor();
    const double inv_heads = 1.0 / params.num_heads();

    AttentionGrads out;
    out.x = Matrix::Zero(x0.rows(), x0.cols());
    for (int l = 0; l < params.num_heads(); ++l) {
        const auto& w = cache.head_weights[l];
        const Matrix& keys = cache.keys[l];
        const Matrix& queries = cache.queries[l];
        Matrix gk = Matrix::Zero(keys.rows(), keys.cols());
        Matrix gq = Matrix::Zero(queries.rows(), queries.cols());
        for (int i = 0; i < n; ++i) {
            const auto b = a.row_ptr[i], e = a.row_ptr[i + 1];
            double inner = 0.0;
            for (auto k = b; k < e; ++k) inner += w[k] * grad_values[k];
            inner *= inv_heads;
            for (auto k = b; k < e; ++k) {
                // softmax Jacobian, then the bilinear logit
                const double gs = w[k] * (inv_heads * grad_values[k] - inner) * inv_div;
                const int j = a.col[k];
                gk.row(i).noalias() += gs * queries.row(j);
                gq.row(j).noalias() += gs * keys.row(i);
            }
        }
        const auto& head = params.heads[l];
        out.key.push_back(gk.transpose() * x0);
        out.query.push_back(gq.transpose() * x0);
        out.x.noalias() += gk * head.key + gq * head.query;
    }
    return out;
}

CouplingMatrix uniform_coupling(const Graph& g, bool with_self_loops) {
    CouplingMatrix a = CouplingMatrix::support_of(g, with_self_loops);
    for (int i = 0; i < a.n; ++i) {
        const auto b = a.row_ptr[i], e = a.row_ptr[i + 1];
        if (b == e)
            throw InvalidInput("uniform_coupling: node " + std::to_string(i) +
                               " has no support (isolated without self-loop)");
        const double w = 1.0 / static_cast<double>(e - b);
        for (auto k = b; k < e; ++k) a.val[k] = w;
    }
    return a;
}

bool row_stochastic_check(const CouplingMatrix& a, double tol) {
    if (a.row_ptr.size() != static_cast<std::size_t>(a.n) + 1) return false;
    for (int i = 0; i < a.n; ++i) {
        if (a.row_ptr[i] == a.row_ptr[i + 1]) return false;
        double s = 0.0;
        for (auto k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) {
            if (!(a.val[k] >= -tol)) return false;
            s += a.val[k];
        }
        if (!(std::abs(s - 1.0) <= tol)) return false;
    }
    return true;
}

}  // namespace kgnn
