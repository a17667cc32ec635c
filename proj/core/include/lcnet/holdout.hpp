#pragma once

#include "lcnet/models.hpp"

#include <cstdint>
#include <vector>

namespace lcnet {

/// Gaussian prior over task parameters plus the likelihood scale used when
/// adapting a model to a task that was not part of training.
struct HoldoutPrior {
  Matrix d_cov;   // d_beta x d_beta, symmetric positive definite
  double s2 = 1.0;
};

/// D is the sample covariance of the base-group task parameters (columns of
/// `base_betas`) with a small jitter on the diagonal; s^2 is the mean squared
/// residual of the trained model on base-group held-out data.
HoldoutPrior estimate_prior(const Matrix& base_betas, const Vector& base_residuals,
                            double jitter = 1e-8);

/// (1/s^2) sum_i (y_i - f(x_i; beta))^2 + beta^T D^-1 beta, the negative log
/// posterior up to constants.
double holdout_objective(const MultiTaskModel& frozen_model, const Matrix& task_x,
                         const Vector& task_y, const Vector& beta, const HoldoutPrior& prior);

struct HoldoutFit {
  Vector beta_hat;
  double objective = 0.0;
  int evaluations = 0;
};

/// Minimizes the hold-out objective over a box spanning the base-group task
/// parameters extended by half their range per coordinate, using LIPO plus
/// a deterministic local pattern-search refinement. Shared parameters are
/// never touched. With no data the prior mode (zero) is returned directly,
/// as it is for a degenerate (zero-spread) base group.
HoldoutFit fit_holdout_task(const MultiTaskModel& frozen_model, const Matrix& task_x,
                            const Vector& task_y, const HoldoutPrior& prior,
                            const Matrix& base_betas, int budget_per_dim = 25,
                            std::uint64_t seed = 0);

struct ScanPoint {
  Vector beta;
  double density = 0.0;  // normalized to unit maximum
};

/// Evaluates exp(-objective/2) over a grid of task parameter values,
/// normalized to unit maximum. `include_prior` drops the beta^T D^-1 beta
/// term when false.
std::vector<ScanPoint> likelihood_scan(const MultiTaskModel& frozen_model, const Matrix& task_x,
                                       const Vector& task_y, const HoldoutPrior& prior,
                                       const std::vector<Vector>& grid, bool include_prior = true);

/// 1-D convenience grid over [lo, hi].
std::vector<Vector> scan_grid_1d(double lo, double hi, int points);

/// Indices of strict local maxima of the scan whose density exceeds `floor`.
std::vector<int> scan_local_modes(const std::vector<ScanPoint>& scan, double floor = 1e-3);

/// Splits task ids 1..m into `groups` contiguous-size random groups that
/// differ in size by at most one (the rotation protocol for hold-out
/// experiments). Deterministic per seed.
std::vector<std::vector<int>> rotate_task_groups(int num_tasks, int groups, std::uint64_t seed);

void save_scan_csv(const std::vector<ScanPoint>& scan, const std::string& path);

}  // namespace lcnet
