#pragma once

#include "kgnn/graph.hpp"
#include "kgnn/integrate.hpp"
#include "kgnn/model.hpp"
#include "kgnn/syncdiag.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace kgnn {

enum class OptimizerKind { adam, sgd_momentum };

std::string to_string(OptimizerKind k);
OptimizerKind parse_optimizer_kind(const std::string& name);

struct TrainConfig {
    ModelConfig model;
    int max_epochs = 300;
    double learning_rate = 0.01;
    double weight_decay = 5e-4;
    OptimizerKind optimizer = OptimizerKind::adam;
    double momentum = 0.9;  // sgd_momentum only
    int patience = 100;
    std::uint64_t seed = 0;
    double dropout = 0.4;
    /// When set to an adaptive method, the best checkpoint is also integrated with it
    /// to report NFE.
    std::optional<SolverConfig> eval_solver;

    void validate() const;
};

struct RunResult {
    double best_val_acc = 0.0;
    double best_val_loss = 0.0;
    double test_acc_at_best_val = 0.0;
    int best_epoch = 0;
    int epochs_run = 0;
    double wall_time_s = 0.0;
    std::optional<long> nfe;
    SyncReport sync;
};

struct TrainOutcome {
    ModelParams params;  // best-validation checkpoint
    RunResult result;
};

/// Full-batch training on the train mask with early stopping on validation accuracy
/// (ties go to lower validation loss). Writes one JSON line per epoch
/// {epoch, train_loss, val_acc} and a final {test_acc, nfe_if_adaptive} to log when given.
/// Throws DivergenceError when the loss or state becomes non-finite.
TrainOutcome train_node_classifier(const Graph& g, const SplitSpec& split, const TrainConfig& cfg,
                                   std::ostream* log = nullptr);

struct SeededOptions {
    int n_splits = 5;
    int n_seeds = 2;
    int per_class = 20;
    int val = 500;
    std::uint64_t base_seed = 0;
    int workers = 1;
    /// Per-run JSON-lines logs land here as run_<split>_<seed>.jsonl when set.
    std::optional<std::filesystem::path> log_dir;
};

struct RunRecord {
    int split = 0;
    int seed_index = 0;
    bool ok = false;
    std::string error;
    RunResult result;
};

struct SeededSummary {
    std::vector<RunRecord> runs;  // split-major order
    double mean_acc = 0.0;
    double std_acc = 0.0;  // sample std; 0 with a single successful run
    int excluded = 0;
    /// Mean over successful runs of the final max pairwise distance and order parameter
    /// (channel average).
    double max_pairwise = 0.0;
    double order_r = 0.0;
};

/// Split seed = base_seed + split index; run seed = base_seed + run index
/// (run index = split * n_seeds + seed index). Diverged runs are recorded and excluded.
SeededSummary run_seeded(const Graph& g, const TrainConfig& cfg, const SeededOptions& opts);

/// Mean and sample standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& xs);

}  // namespace kgnn
