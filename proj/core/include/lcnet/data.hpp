#pragma once

#include "lcnet/net.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace lcnet {

/// Observations from m regression tasks over a shared input space.
/// Column i of `x` is the input of observation i; task ids are dense 1..m.
struct MultiTaskDataset {
  Matrix x;                              // d_x rows, one column per observation
  Vector y;                              // responses
  std::vector<int> task;                 // 1-based task id per observation
  int num_tasks = 0;
  std::vector<std::string> task_labels;  // original task labels, index j-1
  std::vector<std::string> feature_names;

  int dim() const { return static_cast<int>(x.rows()); }
  long size() const { return static_cast<long>(y.size()); }
  std::vector<long> task_counts() const;

  /// Throws std::invalid_argument on inconsistent sizes or non-contiguous ids.
  void validate() const;
};

/// Per-task parameters of the frequency generator: y = 0.5 sin(2π ω x) + 0.5 + ε.
struct FrequencyTaskParams {
  std::vector<double> omega;  // one frequency per task, U(0.5, 4.0)
  double sigma = 0.1;
};

double frequency_truth(double omega, double x);

struct FrequencyData {
  MultiTaskDataset train;
  MultiTaskDataset test;
  FrequencyTaskParams params;
};

/// Sine-wave tasks of random frequency on x in (0, 1).
/// Defaults follow the 250-task / 30000 / 25000 benchmark layout.
FrequencyData gen_frequency(int num_tasks = 250, long n_train = 30000, long n_test = 25000,
                            double sigma = 0.1, std::uint64_t seed = 0);

/// Task parameters of the sine-and-line generator. Tasks come in two classes:
/// affine (y = a x + b) and sine (y = c sin(x + d)).
struct SineLineTaskParams {
  struct Task {
    bool is_sine = false;
    double a = 0.0, b = 0.0;  // affine slope / intercept
    double c = 0.0, d = 0.0;  // sine amplitude / phase
  };
  std::vector<Task> tasks;
  double sigma = 0.3;
};

double sine_line_truth(const SineLineTaskParams::Task& t, double x);

struct SineLineData {
  MultiTaskDataset train;
  MultiTaskDataset test;
  SineLineTaskParams params;
};

/// Half the tasks affine, half sine, x in U(-5, 5). `num_tasks` must be even.
SineLineData gen_sine_line(int num_tasks = 100, long n_train = 6000, long n_test = 10000,
                           double sigma = 0.3, std::uint64_t seed = 0);

/// Declares how to read a CSV file into a MultiTaskDataset.
struct CsvSchema {
  struct Feature {
    std::string name;
    bool categorical = false;
  };
  std::string task_column;
  std::vector<Feature> features;
  std::string target_column;
};

CsvSchema load_schema(const std::string& path);
void save_schema(const CsvSchema& schema, const std::string& path);

/// Reads a CSV file. Categorical features are one-hot expanded (levels in
/// order of first appearance), task labels are remapped to dense ids 1..m in
/// order of first appearance, and row order is preserved. Unparseable cells
/// are reported with their row number.
MultiTaskDataset load_csv(const std::string& path, const CsvSchema& schema);

/// Writes the layout load_csv reads back: task column, features, target.
void save_csv(const MultiTaskDataset& data, const std::string& path,
              const std::string& task_column = "task",
              const std::string& target_column = "y");

/// Per-feature and target standardization fitted on training data.
struct Scaler {
  Vector feature_mean;
  Vector feature_std;
  double target_mean = 0.0;
  double target_std = 1.0;
};

/// Means and standard deviations of the training features and target.
/// Constant columns fall back to standard deviation 1.
Scaler fit_scaler(const MultiTaskDataset& train);

MultiTaskDataset apply_scaler(const Scaler& s, const MultiTaskDataset& data);

double scale_target(const Scaler& s, double y);
double invert_target(const Scaler& s, double y_scaled);
Vector invert_targets(const Scaler& s, const Vector& y_scaled);
Matrix scale_features(const Scaler& s, const Matrix& x);

/// Keeps round(fraction * n_j) observations of every task (at least one),
/// sampled uniformly without replacement. Deterministic per seed.
MultiTaskDataset subsample_balanced(const MultiTaskDataset& data, double fraction,
                                    std::uint64_t seed);

/// Per-task stratified split into (part_a, part_b); disjoint and exhaustive.
/// Every task contributes at least one observation to part_a.
std::pair<MultiTaskDataset, MultiTaskDataset> split_stratified(const MultiTaskDataset& data,
                                                               double fraction_a,
                                                               std::uint64_t seed);

/// Rows of `data` whose task id is in `keep` (1-based), with task ids
/// remapped to 1..|keep| in the order given.
MultiTaskDataset select_tasks(const MultiTaskDataset& data, const std::vector<int>& keep);

/// Rows of a single task, keeping the original id space (m unchanged).
MultiTaskDataset select_task_rows(const MultiTaskDataset& data, int task_id);

}  // namespace lcnet
