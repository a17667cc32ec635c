#pragma once

#include "lcnet/lipo.hpp"
#include "lcnet/models.hpp"
#include "lcnet/train.hpp"

#include <cstdint>
#include <string>

namespace lcnet {

/// Search space over peak learning rate, hidden size, both regularization
/// factors, and the task parameter dimension. Momentum (0.7) and the number
/// of residual blocks (2) stay fixed. `hidden_cap` trims the hidden-size
/// range for desk-scale runs.
HyperBox default_hyper_box(int num_tasks, int hidden_cap = 500);

/// Drops the dimensions a context-sensitive model does not use.
HyperBox box_for_kind(const HyperBox& box, ModelKind kind);

/// Structural and optimizer settings decoded from a search point.
struct HpoConfig {
  TrainConfig train;
  int hidden_dim = 0;
  int d_beta = 1;
};

HpoConfig config_from_point(const HyperBox& box, const Vector& point, const TrainConfig& base);

struct HpoResult {
  HpoConfig best;
  Vector best_point;
  double best_validation_rmse = 0.0;
  std::vector<TrialRecord> trials;
  TrainResult final;  // trained on all data with the best configuration
};

/// Hyperparameter search: stratified 80/20 split of the training data, one
/// model trained per LIPO trial and scored by validation RMSE, 25 trials,
/// then a final model trained on all of the data with the best
/// configuration (retrying with a damped learning rate if it diverges).
HpoResult hpo_search(const MultiTaskDataset& train_data, ModelKind kind, const HyperBox& box,
                     const TrainConfig& base_config, std::uint64_t seed,
                     double validation_fraction = 0.2);

void save_trials_csv(const HyperBox& box, const std::vector<TrialRecord>& trials,
                     const std::string& path);
void save_best_config_json(const HpoResult& result, const HyperBox& box, const std::string& path);

/// The number of LIPO iterations every search runs for.
inline constexpr int kHpoIterations = 25;

}  // namespace lcnet
