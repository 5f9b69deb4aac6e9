#pragma once

#include "kgnn/types.hpp"

#include <Eigen/SparseCore>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace kgnn {

using Edge = std::pair<int, int>;
using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Directed graph in CSR form with dense node features and class labels.
///
/// Immutable after construction. Edges are stored sorted by (src, dst) with
/// duplicates removed; undirected datasets carry both directions.
class Graph {
public:
    Graph() = default;

    /// Validates endpoints, sizes and label range; drops duplicate edges.
    static Graph from_edges(int n, std::vector<Edge> edges, Matrix features,
                            std::vector<int> labels, int num_classes,
                            std::string name = {});

    int num_nodes() const { return n_; }
    std::size_t num_edges() const { return targets_.size(); }
    int feature_dim() const { return static_cast<int>(features_.cols()); }
    int num_classes() const { return num_classes_; }
    const std::string& name() const { return name_; }

    const Matrix& features() const { return features_; }
    /// Sparse copy of the features when at most 20% of entries are nonzero, else null.
    const SparseRowMatrix* sparse_features() const { return sparse_features_.get(); }
    const std::vector<int>& labels() const { return labels_; }

    const std::vector<std::int64_t>& offsets() const { return offsets_; }
    const std::vector<int>& targets() const { return targets_; }

    std::span<const int> neighbors(int v) const {
        return {targets_.data() + offsets_[v],
                static_cast<std::size_t>(offsets_[v + 1] - offsets_[v])};
    }

    bool has_edge(int src, int dst) const;
    std::vector<Edge> edge_list() const;

    /// Count of unordered node pairs joined by at least one directed edge (self-loops excluded).
    std::size_t num_undirected_edges() const;

    /// Returns a copy with every edge mirrored.
    Graph symmetrized() const;

private:
    int n_ = 0;
    int num_classes_ = 0;
    std::string name_;
    std::vector<std::int64_t> offsets_{0};
    std::vector<int> targets_;
    Matrix features_;
    std::shared_ptr<const SparseRowMatrix> sparse_features_;
    std::vector<int> labels_;
};

struct ComponentResult {
    Graph graph;
    /// mapping[new_index] = original node index
    std::vector<int> mapping;
};

/// Induced subgraph on the largest weakly-connected component, indices remapped densely.
/// Ties go to the component holding the smallest original node index.
ComponentResult largest_connected_component(const Graph& g);

/// True when the undirected view of g is connected.
bool is_weakly_connected(const Graph& g);

// ---------------------------------------------------------------------------
// Bundle I/O

/// Reads edges.csv, features.csv, labels.csv and meta.json from a directory.
Graph load_bundle(const std::filesystem::path& dir);
void save_bundle(const Graph& g, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Synthetic graphs

enum class SyntheticKind { ring, complete, erdos_renyi, sbm };

struct SyntheticSpec {
    SyntheticKind kind = SyntheticKind::ring;
    int n = 10;
    int f = 4;
    std::uint64_t seed = 0;
    double p = 0.1;          // erdos_renyi edge probability; sbm within-class probability
    double p_out = 0.01;     // sbm between-class probability
    int classes = 2;         // sbm only
    double signal = 1.0;     // sbm class-mean feature offset
};

/// Deterministic in the seed. ring/complete/erdos_renyi draw N(0,1) features and
/// assign labels round-robin over 2 classes; sbm plants class-correlated features.
Graph generate_synthetic(const SyntheticSpec& spec);

/// Parses "ring:n=5:f=3:seed=1", "erdos_renyi:p=0.2:n=20", "sbm:n=300:classes=3:p=0.05:p_out=0.005".
SyntheticSpec parse_synthetic_spec(const std::string& text);

// ---------------------------------------------------------------------------
// Label splits

struct SplitSpec {
    std::vector<bool> train_mask;
    std::vector<bool> val_mask;
    std::vector<bool> test_mask;
    std::optional<int> per_class;
    std::uint64_t seed = 0;

    std::size_t count(const std::vector<bool>& mask) const;
};

/// per_class training nodes per class (or all of a class if fewer exist), then
/// val nodes from the remainder; everything else is test.
SplitSpec make_split(const Graph& g, int per_class, int val, std::uint64_t seed);

std::vector<int> mask_indices(const std::vector<bool>& mask);

}  // namespace kgnn
