#pragma once

#include "kgnn/graph.hpp"
#include "kgnn/integrate.hpp"
#include "kgnn/train.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace kgnn {

/// Malformed config file, unknown key or bad value. Maps to exit code 2.
class ConfigError : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

/// Dataset could not be loaded or generated. Maps to exit code 3.
class DatasetError : public IoError {
public:
    using IoError::IoError;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDataset = 3;
inline constexpr int kCsvSchemaVersion = 1;

/// "section.key" -> value, in file order of first appearance.
using IniEntries = std::vector<std::pair<std::string, std::string>>;

/// Flat key = value lines grouped under [section] headers; '#' and ';' start comments.
/// Keys before any header belong to no section. Throws ConfigError with the line number.
IniEntries parse_ini(const std::string& text);

/// A model variant: dynamics kind plus optional overrides, e.g. "grand_modified:beta=0".
struct DynamicsVariant {
    std::string label;
    DynamicsKind kind = DynamicsKind::kuramoto;
    std::optional<double> beta;  // fixed beta; disables learning it
};

DynamicsVariant parse_dynamics_variant(const std::string& text);

enum class SweepAxis { T, K, per_class };

struct SyncDemoConfig {
    std::string graph = "complete:n=20:f=1";
    int channels = 1;
    double T = 50.0;
    double dt = 0.01;
    double K = 1.0;
    double K_freq = 5.0;
    double omega_spread = 0.1;
    double init_spread = 1.0;
    std::uint64_t seed = 0;
    int record_every = 10;
};

struct ExperimentConfig {
    std::string dataset;  // bundle directory or synthetic:<spec>
    bool lcc = true;
    std::vector<DynamicsVariant> dynamics;  // empty -> command default
    TrainConfig train;
    SeededOptions seeded;
    SolverConfig solver;
    std::optional<SweepAxis> sweep_axis;
    std::vector<double> sweep_values;
    std::vector<double> nfe_tolerances;
    SyncDemoConfig sync;
    std::filesystem::path out = "out";
};

/// Applies one setting; throws ConfigError naming the field on unknown keys or bad values.
void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value);

ExperimentConfig load_config_file(const std::filesystem::path& path, ExperimentConfig base = {});

/// Writes effective_config.ini into the output directory.
void write_effective_config(const ExperimentConfig& cfg, const std::filesystem::path& dir);

/// Bundle directory or synthetic:<spec>, optionally reduced to its largest component.
/// Throws DatasetError.
Graph load_dataset(const std::string& source, bool lcc);

struct NfeResult {
    std::string dynamics;
    long nfe = 0;
    long accepted = 0;
    long rejected = 0;
    bool ok = true;
    std::string error;  // set when the solver gave up (budget or step underflow)
};

/// Integrates kuramoto and grand_linear right-hand sides from the model's X(0) and
/// attention coupling with the same dopri5 settings.
std::vector<NfeResult> nfe_compare(const Graph& g, const ModelParams& p, const SolverConfig& solver);

int cmd_run(const ExperimentConfig& cfg, std::ostream& msg);
int cmd_depth_sweep(const ExperimentConfig& cfg, std::ostream& msg);
int cmd_coupling_sweep(const ExperimentConfig& cfg, std::ostream& msg);
int cmd_label_sweep(const ExperimentConfig& cfg, std::ostream& msg);
int cmd_nfe_compare(const ExperimentConfig& cfg, std::ostream& msg);
int cmd_sync_demo(const ExperimentConfig& cfg, std::ostream& msg);
int cmd_make_bundle(const ExperimentConfig& cfg, std::ostream& msg);

/// Dispatches a verb name; unknown verbs are config errors.
int run_command(const std::string& verb, const ExperimentConfig& cfg, std::ostream& msg);

}  // namespace kgnn
