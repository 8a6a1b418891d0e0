#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "asymfusion/network.hpp"
#include "asymfusion/synthdata.hpp"
#include "asymfusion/train.hpp"

namespace asymfusion {

struct TrainConfig {
    int epochs = 30;
    int batch_size = 8;
    OptimizerConfig optimizer;
    LossConfig loss;
};

/// Everything one training run depends on.
struct RunConfig {
    NetConfig net;
    SynthConfig data;
    TrainConfig train;
    /// Data modalities fed to the network, in order; empty feeds all of them.
    std::vector<int> inputs;
    std::uint64_t seed = 1;
    std::string output_dir;

    /// Throws ConfigError.
    void validate() const;
    /// Indices of the data modalities the network sees.
    std::vector<int> resolved_inputs() const;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Missing keys keep their defaults; unknown keys and bad values throw ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);

/// Applies `path.to.key=value` style overrides. The value is parsed as JSON
/// when possible and taken as a string otherwise.
void apply_override(nlohmann::json& j, const std::string& dotted_key, const std::string& value);

/// Output directory: explicit value, else $ASYMFUSION_OUT, else "out".
std::filesystem::path resolve_output_dir(const std::string& explicit_dir);

struct TrainResult {
    MetricsReport metrics;
    ParamReport params;
    std::vector<double> epoch_loss;
    double seconds = 0.0;
};

/// Picks the network's inputs out of a dataset batch.
std::vector<Tensor> select_inputs(const std::vector<Tensor>& all, const std::vector<int>& which);

/// Trains on data.train and evaluates the ensemble prediction on data.test.
/// `on_epoch` (optional) sees the epoch index and its mean loss.
TrainResult train_and_evaluate(const RunConfig& cfg, const SynthData& data, AsymFusionNet& net,
                               SgdOptimizer& opt,
                               const std::function<void(int, double)>& on_epoch = {});

/// Ensemble argmax metrics on a dataset in eval mode.
MetricsReport evaluate_model(AsymFusionNet& net, const Dataset& data, const std::vector<int>& inputs,
                             int batch_size);

/// FNV-1a over the raw bytes of every recorded activation of `branch`.
std::uint64_t branch_checksum(const ActivationTrace& trace, int branch, const std::string& prefix = "enc.");

/// Raised when a checkpoint is unreadable or inconsistent. The message names
/// the offending tensor when there is one.
class CheckpointError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kCheckpointPayload = "checkpoint.bin";
inline constexpr const char* kCheckpointManifest = "checkpoint.manifest.json";

/// Writes checkpoint.bin and checkpoint.manifest.json into `dir`. The
/// payload holds parameters, running statistics and momentum buffers as
/// little-endian f64, back to back in manifest order.
void save_checkpoint(const std::filesystem::path& dir, const RunConfig& cfg, AsymFusionNet& net,
                     const SgdOptimizer& opt);

struct LoadedCheckpoint {
    RunConfig config;
    std::unique_ptr<AsymFusionNet> net;
    SgdOptimizer optimizer;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

/// One cell of an ablation grid.
struct ExperimentCell {
    std::string row;
    std::string column;
    RunConfig config;
};

/// Cells of the named grid: "sharing", "components" or "direction".
/// Throws ConfigError for any other name.
std::vector<ExperimentCell> experiment_grid(const std::string& name, const RunConfig& base);

struct SeedRun {
    std::uint64_t seed = 0;
    TrainResult result;
    /// Encoder checksum of the donor branch, trained net and its unfused
    /// twin (same weights, fusion off). Only set for one-way directions.
    std::optional<std::uint64_t> donor_checksum;
    std::optional<std::uint64_t> donor_checksum_unfused;
};

struct CellResult {
    ExperimentCell cell;
    std::vector<SeedRun> runs;
    double miou_mean = 0.0, miou_std = 0.0;
    double pixel_acc_mean = 0.0, pixel_acc_std = 0.0;
    double mean_acc_mean = 0.0, mean_acc_std = 0.0;
};

/// Trains the cell once per seed. Seed i sets both the network seed and the
/// data seed to base.seed + i.
CellResult run_cell(const ExperimentCell& cell, int seeds,
                    const std::function<void(const std::string&)>& log = {});

struct ExperimentReport {
    std::string name;
    std::vector<CellResult> cells;
    double seconds = 0.0;
};

ExperimentReport run_experiment(const std::string& name, const RunConfig& base, int seeds,
                                const std::function<void(const std::string&)>& log = {});

/// Deterministic part of the report. Wall times live under "timing".
nlohmann::json report_to_json(const ExperimentReport& r);
/// One line per cell: row, column, params, mean and stdev of each metric.
std::string report_to_csv(const ExperimentReport& r);
/// Writes report.json and summary.csv into `dir`.
void write_report(const ExperimentReport& r, const std::filesystem::path& dir);

nlohmann::json metrics_to_json(const MetricsReport& m);
nlohmann::json params_to_json(const ParamReport& p);

}  // namespace asymfusion
