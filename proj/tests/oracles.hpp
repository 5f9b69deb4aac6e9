#pragma once

// Brute-force reference evaluators. Deliberately naive: dense loops straight from the
// formulas, sharing no code with the library kernels they check.

#include "kgnn/coupling.hpp"
#include "kgnn/graph.hpp"
#include "kgnn/types.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace oracle {

using kgnn::Matrix;

/// dX[i,k] = omega[i,k] + K sum_j a(i,j) sin(X[j,k] - X[i,k]) over a dense weight matrix.
inline Matrix kuramoto(const Matrix& x, const Matrix& a_dense, const Matrix* omega, double K) {
    Matrix out = Matrix::Zero(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index k = 0; k < x.cols(); ++k) {
            double s = 0.0;
            for (Eigen::Index j = 0; j < x.rows(); ++j) s += a_dense(i, j) * std::sin(x(j, k) - x(i, k));
            out(i, k) = (omega ? (*omega)(i, k) : 0.0) + K * s;
        }
    return out;
}

/// Per-head softmax over support logits (x W_K^T)_i . (x W_Q^T)_j / divisor, averaged.
inline Matrix attention_dense(const Matrix& x, const kgnn::AttentionParams& p, const kgnn::Graph& g) {
    const auto n = x.rows();
    Matrix out = Matrix::Zero(n, n);
    for (const auto& head : p.heads) {
        for (Eigen::Index i = 0; i < n; ++i) {
            std::vector<int> support{static_cast<int>(i)};
            for (int j : g.neighbors(static_cast<int>(i)))
                if (j != i) support.push_back(j);
            std::vector<double> logits;
            for (int j : support) {
                double s = 0.0;
                for (Eigen::Index r = 0; r < head.key.rows(); ++r) {
                    double ki = 0.0, qj = 0.0;
                    for (Eigen::Index c = 0; c < x.cols(); ++c) {
                        ki += head.key(r, c) * x(i, c);
                        qj += head.query(r, c) * x(j, c);
                    }
                    s += ki * qj;
                }
                logits.push_back(s / p.divisor());
            }
            double z = 0.0;
            for (double l : logits) z += std::exp(l);
            for (std::size_t t = 0; t < support.size(); ++t)
                out(i, support[t]) += std::exp(logits[t]) / z / static_cast<double>(p.heads.size());
        }
    }
    return out;
}

inline double log_sum_exp(const Matrix& logits, Eigen::Index row) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) s += std::exp(logits(row, c));
    return std::log(s);
}

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(r, c);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = u(rng);
    return m;
}

/// Undirected random graph with every node given at least one neighbor.
inline kgnn::Graph random_graph(int n, int f, int c, double p, std::mt19937_64& rng) {
    std::bernoulli_distribution edge(p);
    std::vector<kgnn::Edge> edges;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (edge(rng) || j == i + 1) {
                edges.emplace_back(i, j);
                edges.emplace_back(j, i);
            }
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) labels[i] = i % c;
    return kgnn::Graph::from_edges(n, edges, random_matrix(n, f, rng), labels, c);
}

}  // namespace oracle
