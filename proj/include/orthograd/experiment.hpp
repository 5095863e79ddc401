#ifndef ORTHOGRAD_EXPERIMENT_HPP
#define ORTHOGRAD_EXPERIMENT_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "orthograd/data.hpp"
#include "orthograd/optim.hpp"

namespace orthograd
{

//
// Everything needed to re-launch a run. `transform` empty means the plain
// optimiser with no transform stage ("none" on the command line).
//
struct RunConfig
{
    std::string name; // run id; derived from model/optimiser/transform if empty
    std::string model = "basic_cnn";

    std::string data   = "synthetic"; // "synthetic" or a CIFAR-10 binary directory
    Index train_subset = 0;           // CIFAR-10: keep the first n training images
    int synthetic_classes           = 10;
    Index synthetic_train_per_class = 100;
    Index synthetic_test_per_class  = 20;
    double synthetic_separation     = 0.1;
    std::uint64_t synthetic_seed    = 12345;

    OptimizerKind optimiser = OptimizerKind::Sgdm;
    std::optional<TransformKind> transform = TransformKind::Identity;
    bool skip_dense = false;
    HyperParams hp{1e-2, 0.9, 5e-4};

    Index batch_size      = 1024;
    Index eval_batch_size = 1000;
    Index epochs          = 100;
    Index lr_step_every   = 0; // 0: constant learning rate
    double lr_step_gamma  = 0.1;

    std::vector<std::uint64_t> seeds{0};
    std::string out_dir   = "runs";
    std::string precision = "float32";

    std::string run_id() const;
    std::string transform_name() const;
    void validate() const;

    nlohmann::json to_json() const;
    /// Fields absent from `j` keep their defaults.
    static RunConfig from_json(const nlohmann::json& j);
};

RunConfig load_config(const std::string& path);

struct MetricsRecord
{
    std::string run_id;
    std::uint64_t seed = 0;
    Index epoch        = 0;
    std::string split; // train | test | diverged
    double loss     = 0.0;
    double accuracy = 0.0; // percent
    std::vector<std::optional<double>> r_mean; // per captured layer
    Index dead_params   = 0;
    double epoch_wall_s = 0.0;
    double svd_time_s   = 0.0; // cumulative
};

struct SeedResult
{
    std::uint64_t seed = 0;
    std::vector<MetricsRecord> records;
    std::vector<std::string> layer_names;
    bool diverged = false;
    std::string divergence_reason;
    std::string csv_path;
};

struct ExperimentResult
{
    std::vector<SeedResult> seeds;
    std::string summary_path;
};

struct LoadedData
{
    Dataset train;
    Dataset test;
    std::string description;
};

LoadedData load_data(const RunConfig& config);

/// Trains one seed and returns its records; does not write files.
SeedResult train_seed(const RunConfig& config, const LoadedData& data, std::uint64_t seed);

//
// One metrics CSV per seed in `config.out_dir`, then the summary table.
// A diverged seed is recorded and the remaining seeds still run.
//
ExperimentResult run_experiment(const RunConfig& config);
ExperimentResult run_experiment(const RunConfig& config, const LoadedData& data);

/// Column names in CSV order.
std::vector<std::string> metrics_columns(const std::vector<std::string>& layer_names);

void write_metrics_csv(const std::string& path, const RunConfig& config, const LoadedData& data,
                       const SeedResult& result);

struct MetricsFile
{
    std::vector<std::string> header_lines; // without the leading "# "
    nlohmann::json config;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
    std::string body; // everything after the comment header, verbatim
};

MetricsFile read_metrics_csv(const std::string& path);

/// Body of a metrics CSV with the two timing columns blanked.
std::string deterministic_body(const MetricsFile& file);

struct SummaryRow
{
    std::string run_id;
    Index runs     = 0;
    Index diverged = 0;
    double loss_mean = 0.0;
    std::optional<double> loss_se;
    double acc_mean = 0.0;
    std::optional<double> acc_se;
};

/// Mean and standard error (sample std / sqrt(n)); no error for n < 2.
std::pair<double, std::optional<double>> mean_and_standard_error(const std::vector<double>& xs);

/// "72.00 ± 0.71", or "72.00" without an error.
std::string format_mean_se(double mean, const std::optional<double>& se);

//
// Reads every metrics_seed*.csv in `dir`. Refuses (ConfigError) when the
// files were produced by different configurations.
//
SummaryRow summarise(const std::string& dir);

std::string write_summary(const std::string& dir, const SummaryRow& row);

} // namespace orthograd

#endif // ORTHOGRAD_EXPERIMENT_HPP
