#pragma once

#include "lcnet/data.hpp"
#include "lcnet/models.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace lcnet {

struct TrainConfig {
  double peak_lr = 0.1;
  double momentum = 0.7;
  double lambda_alpha = 0.0;
  double lambda_beta = 0.0;
  int max_epochs = 2000;
  int batches_per_epoch = 2;
  double warmup_fraction = 0.10;
  double window_fraction = 0.01;
  double lr_floor = 1e-8;
  double convergence_p_threshold = 0.51;
  double loss_stop = 1e-10;
  double divergence_factor = 10.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Likelihood-ratio plateau test on a window of epoch losses: an OLS line
/// (slope + intercept) is compared against an intercept-only fit, and the
/// resulting chi-square(1) p-value is returned. A flat window that the line
/// cannot improve gives a high p-value. Degenerate cases: p = 1 when both
/// fits are exact, p = 0 when only the line fit is exact.
double convergence_p_value(std::span<const double> window);

enum class SchedulePhase { Warmup, PlateauHalving };

enum class StopReason { Running, MaxEpochs, LearningRateFloor, LossFloor, Diverged, ZeroBudget };

std::string to_string(StopReason reason);

/// Mutable state of the two-stage learning-rate schedule: linear warm-up
/// from the floor to the peak, then halving on detected plateaus with at
/// least one window length between changes.
struct ScheduleState {
  double current_lr = 0.0;
  SchedulePhase phase = SchedulePhase::Warmup;
  int epoch = 0;
  std::vector<double> window;
  int epochs_since_change = 0;

  int warmup_epochs = 0;
  int window_size = 0;
  double peak_lr = 0.0;
  double lr_floor = 0.0;
  double p_threshold = 0.51;
  double loss_stop = 0.0;
  int max_epochs = 0;
};

ScheduleState make_schedule(const TrainConfig& config);

struct ScheduleDecision {
  double lr = 0.0;
  bool stop = false;
  bool converged_flag = false;
  StopReason reason = StopReason::Running;
};

/// Advances the schedule by one epoch given that epoch's mean training loss
/// and returns the learning rate for the next epoch or a stop signal.
ScheduleDecision lr_schedule_step(ScheduleState& state, double epoch_loss);

/// Velocity buffers for classical momentum, shaped like the trainables.
struct MomentumState {
  std::vector<Matrix> w_velocity;
  std::vector<Vector> b_velocity;
  Matrix beta_velocity;
};

MomentumState make_momentum_state(const MultiTaskModel& model);

/// Heavy-ball update: v <- mu v + g, theta <- theta - lr v, applied to the
/// shared parameters and the full task table.
void sgd_step(MultiTaskModel& model, const GradientSet& net_grads, const Matrix& beta_grads,
              MomentumState& state, double lr, double momentum);

/// Mean squared prediction error plus L2 regularization. The task-parameter
/// term is dropped for context-sensitive models.
double mtl_loss(const MultiTaskModel& model, const MultiTaskDataset& data, double lambda_alpha,
                double lambda_beta);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  bool converged = false;
};

struct TrainResult {
  MultiTaskModel model;
  std::vector<EpochRecord> history;
  StopReason stop = StopReason::Running;
  bool diverged = false;
  int epochs_run = 0;
  int retries = 0;
  double wall_seconds = 0.0;
};

/// Full training loop: shuffled equal batches per epoch, batch-mean error
/// plus full regularization per step, schedule applied per epoch.
/// Deterministic for a fixed seed. Divergence (non-finite loss or a loss
/// above divergence_factor times the post-warm-up level) aborts with the
/// diverged flag set.
TrainResult train(MultiTaskModel model, const MultiTaskDataset& data, const TrainConfig& config);

/// Retries diverged runs with a fresh model and the peak learning rate
/// scaled by 0.9 each time, up to `max_retries`. The factory receives a
/// seed offset so retries restart from new weights.
TrainResult train_with_retry(const std::function<MultiTaskModel(std::uint64_t)>& factory,
                             const MultiTaskDataset& data, TrainConfig config,
                             int max_retries = 10);

void save_loss_history_csv(const std::vector<EpochRecord>& history, const std::string& path);
void save_train_diagnostics_json(const TrainResult& result, const std::string& path);

}  // namespace lcnet
