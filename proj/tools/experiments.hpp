#pragma once

#include "lcnet/data.hpp"
#include "lcnet/hpo.hpp"
#include "lcnet/models.hpp"
#include "lcnet/train.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lcnet::bench {

/// Where an experiment's data comes from: one of the synthetic generators or
/// a CSV file with a schema.
struct DatasetSpec {
  std::string generator;  // "frequency" | "sineline" | "" when csv
  int tasks = 0;          // 0 -> generator default
  long n_train = 0;
  long n_test = 0;
  double sigma = -1.0;    // <0 -> generator default
  std::string csv_path;
  std::string schema_path;
  std::string test_csv_path;  // optional held-out file
  double test_fraction = 0.25;  // used when a csv has no test file
};

struct TrainSpec {
  double peak_lr = 0.05;
  double momentum = 0.7;
  double lambda_alpha = 1e-8;
  double lambda_beta = 1e-8;
  int epochs = 2000;
  int batches = 2;
  int hidden = 128;
  int blocks = 2;
  int d_beta = 2;
};

struct ExperimentConfig {
  std::string experiment;  // base | repeat | datasize | dbeta | holdout | scan | construct
  DatasetSpec dataset;
  std::vector<std::string> models{"lc", "cs", "ll", "lme"};
  TrainSpec train;
  bool use_hpo = false;
  int hidden_cap = 200;      // desk-scale cap for the search box
  int repeats = 5;
  std::vector<double> fractions{1.0, 0.5, 0.1};
  std::vector<int> dims{1, 2, 4, 8, 16};
  std::vector<double> holdout_fractions{0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 1.0};
  int holdout_groups = 3;
  int scan_points = 4;
  int scan_grid = 401;
  int jobs = 1;
  bool paper_scale = false;
  std::uint64_t seed = 1;
  std::string out_dir = "results";
};

ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig config_from_json_text(const std::string& text);
void save_config_snapshot(const ExperimentConfig& config, const std::string& path);

/// Dataset in original units plus its standardized training view.
struct PreparedData {
  MultiTaskDataset train_raw;
  MultiTaskDataset test_raw;
  MultiTaskDataset train_scaled;
  Scaler scaler;
  double response_std = 0.0;
  std::optional<FrequencyTaskParams> frequency_params;
  std::optional<SineLineTaskParams> sine_line_params;
};

PreparedData prepare_data(const DatasetSpec& spec, std::uint64_t seed);

/// Applies paper-scale epoch/batch counts (10000x2 below 1e5 points,
/// 1000x20 otherwise) when requested.
void apply_scale_defaults(ExperimentConfig& config, long n_train);

struct ModelRun {
  std::string kind;
  double test_rmse = 0.0;        // original units
  double normalized_rmse = 0.0;  // vs response std
  int retries = 0;
  bool diverged = false;
  std::string stop_reason;
  double wall_seconds = 0.0;
  TrainSpec resolved;            // hyperparameters actually used
};

/// Trains one model kind on prepared data with the resolved settings
/// (running the hyperparameter search first when enabled) and evaluates it
/// on the raw test set.
ModelRun run_model(const ExperimentConfig& config, const PreparedData& data,
                   const std::string& kind, std::uint64_t seed, const std::string& out_dir);

struct ExperimentOutcome {
  std::vector<ModelRun> runs;
  int exit_code = 0;
};

ExperimentOutcome run_base(const ExperimentConfig& config);
ExperimentOutcome run_repeat(const ExperimentConfig& config);
ExperimentOutcome run_datasize(const ExperimentConfig& config);
ExperimentOutcome run_dbeta_sweep(const ExperimentConfig& config);
ExperimentOutcome run_holdout(const ExperimentConfig& config);
ExperimentOutcome run_scan(const ExperimentConfig& config);
ExperimentOutcome run_construct_verify(const ExperimentConfig& config);

ExperimentOutcome run_experiment(const ExperimentConfig& config);

}  // namespace lcnet::bench
